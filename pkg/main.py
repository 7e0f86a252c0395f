from __future__ import annotations

import sys

from utils.logging_config import configure_logging
from presentation.cli import run

def main() -> None:
    configure_logging()
    sys.exit(run())

if __name__ == "__main__":
    main()
