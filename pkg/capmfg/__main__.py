import sys

from capmfg.cli import main

sys.exit(main())
