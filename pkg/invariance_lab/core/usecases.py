import math
from typing import Any, Dict, Optional, Tuple

from ..decorators import log_action
from ..infra.config import ExperimentConfig
from ..infra.storage import ArtifactStorage
from ..infra.settings import settings
from ..logging_config import logger
from .chains import ChainModel, FiniteChain
from .coupling import SmoothingSampler, build_path_coupling, coupling_error
from .exceptions import DefectBelowFloorError, ValidationError
from .mixing import IntervalPattern, c1_sweep, decay_fit, gap_family, standard_patterns
from .moments import c3_tau_fit, covariance_decay, long_run_variance, lp_maximal_check, mc_sum_variance, variance_report
from .operator import mixing_constants, spectral_decompose
from .partition import build, build_block, smallest_feasible_k0, theoretical_rate
from .rates import CURVE_COLUMNS, REPORT_COLUMNS, error_curve, max_stat_ks, report

SEGMENT_COLUMNS = ["k", "j", "kind", "start", "end", "length"]
ISLAND_COLUMNS = ["k", "j", "length", "S", "u", "W2", "sigma2", "i_star", "f", "residual"]
MIXING_COLUMNS = ["k_gap", "M1", "M2", "max_card", "defect", "bound", "holds"]
C3_COLUMNS = ["n", "deviation", "stderr", "k_at_max"]
KS_COLUMNS = ["N", "distance", "stderr", "degenerate"]


class LabUseCases:
    """Сценарии подкоманд: проверка конфигурации, вычисление, запись артефактов."""

    def _prepare(
        self, config: ExperimentConfig, for_rates: bool = False, partition_field: Optional[str] = None
    ) -> Tuple[ChainModel, ArtifactStorage]:
        config.validate(for_rates=for_rates, partition_field=partition_field)
        model = config.load_model()
        storage = ArtifactStorage(config.out, config.provenance(), config.seed)
        return model, storage

    @staticmethod
    def _finite(model: ChainModel, command: str) -> FiniteChain:
        if not isinstance(model, FiniteChain):
            raise ValidationError("model", f"команда '{command}' требует конечную цепь (kind='finite')")
        return model

    @staticmethod
    def _mu_sigma(model: ChainModel) -> Tuple[float, float]:
        mu, sigma2 = long_run_variance(model)
        if sigma2 <= 0:
            logger.warning("Long-run variance is zero (degenerate observable), using sigma = 1")
            return mu, 1.0
        return mu, math.sqrt(sigma2)

    def _partition_for(self, config: ExperimentConfig, N: int):
        beta = config.resolved_beta
        n = N.bit_length() - 1
        k0 = smallest_feasible_k0(n, config.epsilon, beta, config.k0)
        if k0 != config.k0:
            logger.warning(f"k0 raised from {config.k0} to {k0} for N={N}")
        return build(N, config.epsilon, beta, k0)

    @log_action
    def spectral(self, config: ExperimentConfig) -> Dict[str, Any]:
        model, storage = self._prepare(config)
        chain = self._finite(model, "spectral")
        spectral = spectral_decompose(chain)
        constants = mixing_constants(spectral)
        result = {"spectral": spectral.to_dict(), "constants": constants.to_dict()}
        storage.write_json("spectral.json", result)
        storage.write_manifest("spectral")
        return result

    @log_action
    def variance(self, config: ExperimentConfig) -> Dict[str, Any]:
        model, storage = self._prepare(config)
        moments = variance_report(model, config.c3_n_list, config.c3_k_list, config.reps, config.seed,
                                  config.delta, config.threads)
        mc_estimate, mc_stderr = mc_sum_variance(model, config.mc_n, config.reps, config.seed, moments.mu,
                                                 config.threads)
        result: Dict[str, Any] = {
            "moments": moments.to_dict(),
            "monte_carlo": {"n": config.mc_n, "reps": config.reps, "estimate": mc_estimate, "stderr": mc_stderr,
                            "within_3_stderr": abs(mc_estimate - moments.long_run_sigma2) <= 3.0 * mc_stderr},
            "c3": c3_tau_fit(moments.c3_profile),
            "lp_maximal": lp_maximal_check(model, 2.0 + 2.0 * config.delta, config.c3_n_list, config.reps,
                                           config.seed, moments.mu, config.delta, config.threads),
        }
        if isinstance(model, FiniteChain):
            result["covariance_decay"] = covariance_decay(model, [0, 1, 4], config.c3_k_list, config.delta)
        storage.write_json("variance.json", result)
        storage.write_csv("c3.csv", C3_COLUMNS, [p.to_dict() for p in moments.c3_profile])
        storage.write_manifest("variance")
        return result

    @log_action
    def partition(self, config: ExperimentConfig) -> Dict[str, Any]:
        config.validate(require_model=False, partition_field=None if config.block is not None else "N")
        storage = ArtifactStorage(config.out, config.provenance(), config.seed)
        beta = config.resolved_beta
        if config.block is not None:
            rows = [s.to_dict() for s in build_block(config.block, config.epsilon, beta)]
            result = {"block": config.block, "epsilon": config.epsilon, "beta": beta, "segments": len(rows)}
        else:
            built = self._partition_for(config, config.N)
            rows = built.rows()
            result = {"k0": built.k0, "n": built.n, "N": built.N, "locator": list(built.locator),
                      "islands": len(built.islands()), "gaps": len(built.gaps()), "epsilon": config.epsilon,
                      "beta": beta, "theoretical_rate": theoretical_rate(config.alpha)}
        storage.write_csv("partition.csv", SEGMENT_COLUMNS, rows)
        storage.write_json("partition.json", result)
        storage.write_manifest("partition")
        result["rows"] = rows
        return result

    @log_action
    def mixing(self, config: ExperimentConfig) -> Dict[str, Any]:
        model, storage = self._prepare(config)
        chain = self._finite(model, "mixing")
        rows = c1_sweep(chain, standard_patterns(k_gaps=config.k_gaps), threads=config.threads)
        result: Dict[str, Any] = {"patterns": len(rows), "violations": 0,
                                  "constants": mixing_constants(spectral_decompose(chain)).to_dict()}
        try:
            fit = decay_fit(chain, None, gap_family(IntervalPattern((0, 1, 2), 1, 1), config.k_gaps))
            result["decay_fit"] = fit._asdict()
        except DefectBelowFloorError as e:
            logger.warning(f"Decay fit skipped: {e}")
            result["decay_fit"] = None
            result["decay_fit_error"] = str(e)
        storage.write_csv("mixing.csv", MIXING_COLUMNS, rows)
        storage.write_json("mixing.json", result)
        storage.write_manifest("mixing")
        return result

    @log_action
    def couple(self, config: ExperimentConfig) -> Dict[str, Any]:
        model, storage = self._prepare(config, partition_field="N")
        mu, sigma = self._mu_sigma(model)
        partition = self._partition_for(config, config.N)
        smoothing = SmoothingSampler(settings.epsilon0, seed=config.seed) if config.smoothing else None
        trace = build_path_coupling(model, mu, sigma, partition, config.N, config.reps_for_cdf, config.seed,
                                    smoothing=smoothing, threads=config.threads)
        summary = trace.summary()
        summary["k0"] = partition.k0
        storage.write_csv("couple_islands.csv", ISLAND_COLUMNS, [r.to_dict() for r in trace.islands])
        storage.write_json("couple.json", summary)
        storage.write_manifest("couple")
        logger.info(f"Coupling error at N={config.N}: {coupling_error(trace):.4f}")
        return summary

    @log_action
    def rates(self, config: ExperimentConfig) -> Dict[str, Any]:
        model, storage = self._prepare(config, for_rates=True, partition_field="N_list")
        mu, sigma = self._mu_sigma(model)
        smoothing = SmoothingSampler(settings.epsilon0, seed=config.seed) if config.smoothing else None
        fit = error_curve(model, mu, sigma, config.alpha, config.N_list, config.reps, config.reps_for_cdf,
                          config.seed, config.epsilon, config.beta, config.k0, config.threads, smoothing)
        ks_rows = []
        if config.reps >= 100:
            for N in sorted(set(config.N_list)):
                ks = max_stat_ks(model, mu, sigma, N, config.reps, config.seed, config.threads)
                ks_rows.append({"N": N, **ks._asdict()})
        result = report(config.alpha, [fit])
        storage.write_csv("rates.csv", CURVE_COLUMNS, fit.rows())
        storage.write_csv("rates_report.csv", REPORT_COLUMNS, result["rows"])
        if ks_rows:
            storage.write_csv("rates_ks.csv", KS_COLUMNS, ks_rows)
        storage.write_json("rates_report.json", {**result, "max_stat_ks": ks_rows})
        storage.write_manifest("rates")
        return result


use_cases = LabUseCases()
