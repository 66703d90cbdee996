import sys

from ghnplan.cli import main

sys.exit(main())
