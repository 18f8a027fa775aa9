import os
import shlex
import sys

status = os.system(shlex.join([sys.executable, "-m", "app.main", *sys.argv[1:]]))
sys.exit(os.waitstatus_to_exitcode(status) if os.name == "posix" else status)

# To run this project
# Type 'py start.py <command> --config <file> --out <dir>' inside terminal
