import sys

from hankel_arma.cli import main

sys.exit(main())
