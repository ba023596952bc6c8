from .bench_operators import register as bench_register
from .bench_operators import unregister as bench_unregister
from .run_operators import register as run_register
from .run_operators import unregister as run_unregister


def register():
    run_register()
    bench_register()


def unregister():
    run_unregister()
    bench_unregister()
