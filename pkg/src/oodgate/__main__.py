import sys

from oodgate.cli import main

sys.exit(main())
