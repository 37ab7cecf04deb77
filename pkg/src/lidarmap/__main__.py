import sys

from lidarmap.cli import main

sys.exit(main())
