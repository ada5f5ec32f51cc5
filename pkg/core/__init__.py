from .config import settings
from .texts import CLI_DESCRIPTION, CLI_EPILOG, COMMAND_HELP

__all__ = ["settings", "CLI_DESCRIPTION", "CLI_EPILOG", "COMMAND_HELP"]
