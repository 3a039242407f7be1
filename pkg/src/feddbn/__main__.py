import sys

from feddbn.cli import main

sys.exit(main())
