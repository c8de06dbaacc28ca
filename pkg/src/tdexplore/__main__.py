from tdexplore.cli import main
import sys

sys.exit(main())
