import sys
from shapeweb_solver.cli import main

sys.exit(main())
