"""
Django settings for the ccmpc project.

The project has no HTTP surface: it hosts the ``cc_terminal`` application,
its management commands (the CLI) and the numerical configuration read by
``cc_terminal.conf``.

For the full list of Django settings and their values, see
https://docs.djangoproject.com/en/6.0/ref/settings/
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# No sessions, signing or cookies are used; the key only satisfies Django's checks.
SECRET_KEY = os.environ.get("CCMPC_SECRET_KEY", "ccmpc-local-only")

DEBUG = os.environ.get("CCMPC_DEBUG", "0") == "1"

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "cc_terminal",
]

# Nothing is persisted; experiment outputs go to CSV/JSON files.
DATABASES = {}


# Internationalization
# https://docs.djangoproject.com/en/6.0/topics/i18n/

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True


# Logging
# https://docs.djangoproject.com/en/6.0/topics/logging/

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "{asctime} {levelname} {name}: {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
        },
    },
    "loggers": {
        "cc_terminal": {
            "handlers": ["console"],
            "level": os.environ.get("CCMPC_LOG_LEVEL", "INFO"),
            "propagate": False,
        },
    },
}


# Numerical configuration for cc_terminal
# Missing keys fall back to cc_terminal.conf.DEFAULTS.

CCMPC = {
    "FEASIBILITY_TOL": 1e-8,
    "OPTIMALITY_TOL": 1e-8,
    "INFEASIBILITY_CERT_TOL": 1e-7,
    "SET_INCLUSION_TOL": 1e-9,
    "SET_MAX_ITER": 200,
    "DARE_TOL": 1e-8,
    "DARE_MAX_ITER": 10000,
    "QP_MAX_ITER": 200000,
    "REFERENCE_HORIZON": 500,
    "DEFAULT_SEED": 0,
    "CSV_FLOAT_FORMAT": "%.17g",
    "DEFAULT_JOBS": 1,
    "FIXTURE_DIR": BASE_DIR / "cc_terminal" / "fixtures",
}
