import sys

from mnflow.cli import main

sys.exit(main())
