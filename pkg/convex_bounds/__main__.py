import sys

from convex_bounds.cli import main

sys.exit(main())
