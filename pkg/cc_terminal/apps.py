from django.apps import AppConfig


class CcTerminalConfig(AppConfig):
    name = "cc_terminal"
    verbose_name = "Configuration-constrained terminal ingredients"
