import sys

from risage.cli import main

sys.exit(main())
