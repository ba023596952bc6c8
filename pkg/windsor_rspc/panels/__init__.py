from .report_panel import register as report_register
from .report_panel import unregister as report_unregister


def register():
    report_register()


def unregister():
    report_unregister()
