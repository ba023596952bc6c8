from ..functions.errors import ExportError, RspcError
from ..functions.harness import bench_estimator, bench_qp, write_table
from .registry import Context, Operator, register_class, unregister_class


class BenchEstimatorOperator(Operator):
    bl_idname = "rspc.bench_estimator"
    bl_label = "Estimator Benchmark"
    bl_description = "Markov-parameter error of the naive and compensated fits"

    def execute(self, context: Context):
        seeds = self.options.get("seeds", 20)
        closed_loop = self.options.get("closed_loop", True)
        path = context.output_dir / "bench_estimator.csv"
        try:
            result = bench_estimator(
                context.config, seeds=seeds, closed_loop=closed_loop
            )
            context.output_dir.mkdir(parents=True, exist_ok=True)
            write_table(
                path,
                ("seeds", "closed_loop", "naive_error", "compensated_error", "ratio"),
                [
                    (
                        result.seeds,
                        int(closed_loop),
                        result.biased_error,
                        result.unbiased_error,
                        result.ratio,
                    )
                ],
            )
        except OSError:
            self.report({"ERROR"}, str(ExportError("Could not write benchmark", path)))
            return {"CANCELLED"}
        except RspcError as e:
            self.report({"ERROR"}, f"Estimator benchmark failed: {e}")
            return {"CANCELLED"}

        context.results[self.bl_idname] = result
        self.report(
            {"INFO"},
            f"Compensated/naive Markov error {result.ratio:.3f} over {seeds} seeds",
        )
        return {"FINISHED"}


class BenchQpOperator(Operator):
    bl_idname = "rspc.bench_qp"
    bl_label = "QP Benchmark"
    bl_description = "Hildreth convergence and feasibility on random problems"

    def execute(self, context: Context):
        problems = self.options.get("problems", 100)
        path = context.output_dir / "bench_qp.csv"
        try:
            result = bench_qp(problems, seed=context.config.run.seed)
            context.output_dir.mkdir(parents=True, exist_ok=True)
            write_table(
                path,
                ("problems", "converged", "max_violation", "mean_iterations"),
                [
                    (
                        result.problems,
                        result.converged,
                        result.max_violation,
                        result.mean_iterations,
                    )
                ],
            )
        except OSError:
            self.report({"ERROR"}, str(ExportError("Could not write benchmark", path)))
            return {"CANCELLED"}
        except RspcError as e:
            self.report({"ERROR"}, f"QP benchmark failed: {e}")
            return {"CANCELLED"}

        context.results[self.bl_idname] = result
        if result.converged < result.problems:
            self.report(
                {"WARNING"},
                f"{result.problems - result.converged} problems did not converge",
            )
        self.report(
            {"INFO"},
            f"{result.converged}/{result.problems} converged, "
            f"max violation {result.max_violation:.2e}",
        )
        return {"FINISHED"}


classes = (BenchEstimatorOperator, BenchQpOperator)


def register():
    for cls in classes:
        register_class(cls)


def unregister():
    for cls in classes:
        unregister_class(cls)
