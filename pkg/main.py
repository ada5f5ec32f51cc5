import logging
import sys

from core.config import settings

logging.basicConfig(
    level=logging.DEBUG if settings.debug else settings.log_level.upper(),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    stream=sys.stderr,
)


def run() -> int:
    from api.cli import main

    return main()


if __name__ == "__main__":
    sys.exit(run())
