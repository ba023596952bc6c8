from ..functions.errors import RspcError
from ..functions.harness import export_csv, run_pair, run_scenario, run_sweep
from .registry import Context, Operator, register_class, unregister_class


class RunOperator(Operator):
    bl_idname = "rspc.run"
    bl_label = "Run Scenario"
    bl_description = "Simulate the configured scenario and write its time series"

    def execute(self, context: Context):
        try:
            dump_dir = context.config.estimator.dump_dir
            state_dir = context.output_dir / dump_dir if dump_dir else None
            record = run_scenario(context.config, state_dir)
            export_csv(record, None, context.output_dir)
        except RspcError as e:
            self.report({"ERROR"}, f"Run failed: {e}")
            return {"CANCELLED"}

        context.results[self.bl_idname] = record
        if record.fault:
            self.report({"ERROR"}, f"Plant fault, record truncated at {record.fault}")
            return {"CANCELLED"}
        self.report(
            {"INFO"},
            f"Simulated {len(record)} samples in {record.elapsed:.1f} s "
            f"to {context.output_dir}",
        )
        return {"FINISHED"}


class CompareOperator(Operator):
    bl_idname = "rspc.compare"
    bl_label = "Compare Runs"
    bl_description = "Paired controlled and uncontrolled runs with shared seeds"

    def execute(self, context: Context):
        out = context.output_dir
        try:
            on, off, metrics = run_pair(context.config)
            export_csv(on, metrics, out / "controlled")
            export_csv(off, None, out / "uncontrolled")
            export_csv(on, metrics, out)
        except RspcError as e:
            self.report({"ERROR"}, f"Comparison failed: {e}")
            return {"CANCELLED"}

        context.results[self.bl_idname] = metrics
        for record in (on, off):
            if record.fault:
                self.report({"ERROR"}, f"Plant fault at {record.fault}")
                return {"CANCELLED"}
        self.report(
            {"INFO"}, f"cb analog improvement {metrics.improvement_pct:.1f} %"
        )
        return {"FINISHED"}


class SweepOperator(Operator):
    bl_idname = "rspc.sweep"
    bl_label = "Yaw Sweep"
    bl_description = "Static yaw sweep from -5 to +5 degrees, with and without control"

    def execute(self, context: Context):
        out = context.output_dir
        try:
            on, off, table = run_sweep(context.config, out)
            export_csv(on, None, out / "controlled")
            export_csv(off, None, out / "uncontrolled")
        except RspcError as e:
            self.report({"ERROR"}, f"Sweep failed: {e}")
            return {"CANCELLED"}

        context.results[self.bl_idname] = table
        self.report({"INFO"}, f"Sweep table with {len(table)} yaw angles")
        return {"FINISHED"}


classes = (RunOperator, CompareOperator, SweepOperator)


def register():
    for cls in classes:
        register_class(cls)


def unregister():
    for cls in classes:
        unregister_class(cls)
