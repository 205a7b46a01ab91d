import sys

from mhof.cli import main

sys.exit(main())
