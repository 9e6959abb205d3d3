import sys

from .cli_harness.main import main

sys.exit(main())
