import sys

from qgdm.cli.main import main

sys.exit(main())
