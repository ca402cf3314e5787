from __future__ import annotations

import sys

from chainrec.commands import main_cli

if __name__ == "__main__":
    sys.exit(main_cli())
