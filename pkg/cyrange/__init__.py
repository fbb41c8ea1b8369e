"""Package initialization."""

__version__ = "2024.10.0"

__title__ = "cyrange"
__description__ = "Simulated red-agent training range for network cyber operations"
__url__ = "https://github.com/cyrange/cyrange"
__uri__ = __url__
__doc__ = __description__ + " <" + __uri__ + ">"
