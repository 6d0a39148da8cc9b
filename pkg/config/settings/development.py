from .base import *

DEBUG = True

LOGGING["root"]["level"] = env("SR_LOG_LEVEL", default="DEBUG")
LOGGING["handlers"]["console"]["level"] = "DEBUG"
