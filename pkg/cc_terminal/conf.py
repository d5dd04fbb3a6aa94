"""
Numerical settings for cc_terminal.

Values come from ``settings.CCMPC``; anything missing there falls back to
``DEFAULTS``. Operations that accept a tolerance treat ``None`` as "use the
configured value", so callers only pass numbers they mean to override.
"""

from django.conf import settings

DEFAULTS = {
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
    "FIXTURE_DIR": None,
}


def setting(name):
    overrides = getattr(settings, "CCMPC", {}) if settings.configured else {}
    if name in overrides:
        return overrides[name]
    if name not in DEFAULTS:
        raise KeyError(f"Unknown cc_terminal setting: {name}")
    return DEFAULTS[name]


def resolve(value, name):
    """Return ``value`` unless it is None, in which case the configured setting."""
    return setting(name) if value is None else value
