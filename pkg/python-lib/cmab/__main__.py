import sys

from cmab.cli import main

sys.exit(main())
