import argparse
import sys
from typing import Any, Dict, List, Optional

from prettytable import PrettyTable

from invariance_lab.core.exceptions import LabError
from invariance_lab.core.usecases import use_cases
from invariance_lab.infra.config import ExperimentConfig, load_config
from invariance_lab.logging_config import set_level

COMMANDS = {
    'spectral': 'Спектральное разложение P = Π + Q и константы λ₀, λ₁, λ₂',
    'variance': 'Точные μ, σ², профиль C3, моментные проверки',
    'partition': 'Разбиение блоков на острова и промежутки',
    'mixing': 'Проверка условия C1 и наклон убывания дефекта',
    'couple': 'Каплинг одной траектории с гауссовскими суммами',
    'rates': 'Кривые ошибки каплинга и оценка показателя скорости',
}


class LabCLI:
    """Основной класс CLI интерфейса."""

    def __init__(self):
        self.parser = self._create_parser()

    def _create_parser(self) -> argparse.ArgumentParser:
        common = argparse.ArgumentParser(add_help=False)
        common.add_argument('--config', '-c', help='Путь к JSON-конфигурации эксперимента')
        common.add_argument('--seed', type=int, help='Зерно генератора (0 ≤ seed < 2^64)')
        common.add_argument('--threads', type=int, help='Число потоков')
        common.add_argument('--out', help='Каталог результатов')
        common.add_argument('--model', help='Путь к описанию модели (заменяет model из конфигурации)')
        common.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], help='Уровень логирования')

        parser = argparse.ArgumentParser(
            description='Invariance Lab - проверка слабого принципа инвариантности со скоростью',
            formatter_class=argparse.RawDescriptionHelpFormatter
        )
        subparsers = parser.add_subparsers(
            dest='command',
            title='Команды',
            description='Доступные команды'
        )
        for name, help_text in COMMANDS.items():
            sub = subparsers.add_parser(name, help=help_text, parents=[common])
            if name in ('partition', 'couple'):
                sub.add_argument('--N', dest='N', type=int, help='Длина траектории N')
            if name == 'partition':
                sub.add_argument('--block', type=int, help='Вывести только блок k')
        return parser

    def _build_config(self, args) -> ExperimentConfig:
        config = load_config(args.config) if args.config else ExperimentConfig()
        for name in ('seed', 'threads', 'out', 'model', 'N', 'block'):
            value = getattr(args, name, None)
            if value is not None:
                setattr(config, name, value)
        return config

    def run(self, argv: Optional[List[str]] = None) -> int:
        args = self.parser.parse_args(argv)

        if not args.command:
            self.parser.print_help()
            return 0

        if args.log_level:
            set_level(args.log_level)

        try:
            config = self._build_config(args)
            method = getattr(self, f"cmd_{args.command}")
            method(config)
            return 0

        except LabError as e:
            print(f"Ошибка: {e}", file=sys.stderr)
            return e.exit_code
        except KeyboardInterrupt:
            print("\nЗавершение работы...", file=sys.stderr)
            return 1
        except Exception as e:
            print(f"Неожиданная ошибка: {type(e).__name__}: {e}", file=sys.stderr)
            return 1

    @staticmethod
    def _print_pairs(title: str, pairs: Dict[str, Any]) -> None:
        table = PrettyTable(["Величина", "Значение"])
        table.align = "l"
        for key, value in pairs.items():
            table.add_row([key, f"{value:.6g}" if isinstance(value, float) else value])
        print(title)
        print(table)

    def cmd_spectral(self, config: ExperimentConfig):
        result = use_cases.spectral(config)
        spectral, constants = result["spectral"], result["constants"]
        self._print_pairs("Спектральное разложение:", {
            "κ": spectral["kappa"], "C_Q": spectral["C_Q"], "C_P": spectral["C_P"],
            "λ₀(x)": constants["lambda0_x"], "λ₁": constants["lambda1"], "λ₂": constants["lambda2"],
        })

    def cmd_variance(self, config: ExperimentConfig):
        result = use_cases.variance(config)
        moments, mc = result["moments"], result["monte_carlo"]
        self._print_pairs("Моменты:", {
            "μ": moments["mu"], "σ² (" + moments["method"] + ")": moments["sigma2"],
            "σ² долгосрочная": moments["long_run_sigma2"], f"Var(S_n)/n, n={mc['n']}": mc["estimate"],
            "бутстреп-ошибка": mc["stderr"], "C3 выполнено": result["c3"]["pass"],
        })

    def cmd_partition(self, config: ExperimentConfig):
        result = use_cases.partition(config)
        table = PrettyTable(["k", "j", "Тип", "Начало", "Конец", "Длина"])
        for row in result["rows"][:64]:
            table.add_row([row["k"], row["j"], row["kind"], row["start"], row["end"], row["length"]])
        print(table)
        if len(result["rows"]) > 64:
            print(f"... всего сегментов: {len(result['rows'])} (полный список в partition.csv)")

    def cmd_mixing(self, config: ExperimentConfig):
        result = use_cases.mixing(config)
        fit = result["decay_fit"]
        pairs = {"шаблонов": result["patterns"], "нарушений": result["violations"]}
        if fit is not None:
            pairs.update({"наклон ln(defect)": fit["slope"], "R²": fit["r2"]})
        self._print_pairs("Условие C1:", pairs)

    def cmd_couple(self, config: ExperimentConfig):
        summary = use_cases.couple(config)
        self._print_pairs("Каплинг:", summary)

    def cmd_rates(self, config: ExperimentConfig):
        result = use_cases.rates(config)
        table = PrettyTable(["N", "Медиана ошибки", "Ошибка"])
        for point in result["fits"][0]["points"]:
            table.add_row([point["N"], f"{point['median_error']:.5f}", f"{point['stderr']:.5f}"])
        print(table)
        row = result["rows"][0]
        self._print_pairs("Скорость:", {
            "наклон": row["slope"], "95% интервал": f"[{row['slope_lo']:.4f}, {row['slope_hi']:.4f}]",
            "−ρ*": -row["rho_star"], "β*": row["beta_star"],
        })
        print(result["note"])


def main(argv: Optional[List[str]] = None) -> int:
    return LabCLI().run(argv)
