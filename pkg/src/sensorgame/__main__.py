import sys

from sensorgame.cli import main

sys.exit(main())
