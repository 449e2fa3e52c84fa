import sys

from levneuron.cli import main

sys.exit(main())
