"""
RunConfig: the operator-facing configuration, merged from defaults, a
key=value file and command-line flags, then validated by independent checkers.
"""

from dataclasses import dataclass, fields, replace
from typing import Any, Dict, List, Optional, Tuple

from sympy import isprime

from audit.ledger import NAIVE, PROPOSED, SCHEMES
from config.parser import ConfigSyntaxError, parse_config_file
from config.tokens import KEYS
from field.field import DEFAULT_MODULUS, FieldModulus
from mdscode.mdscode import AUTO, DENSE, VANDERMONDE
from naive.naive import NaiveConfig
from protocol.protocol import ConfigError, ProtocolConfig, Violation, protocol_violations
from protocol.trainer import PSEUDORANDOM, TRAINER_KINDS

SIM = "sim"
SOCKET = "socket"
CARRIERS = (SIM, SOCKET)
FORMATS = ("tsv", "table")
MIXING_KINDS = (VANDERMONDE, DENSE, AUTO)


@dataclass(frozen=True)
class RunConfig:
    n_dbs: int = 2
    r: int = 2
    s: int = 4
    q: int = DEFAULT_MODULUS
    T: int = 1
    scheme: str = PROPOSED
    seed: int = 0
    trainer: str = PSEUDORANDOM
    carrier: str = SIM
    endpoints: Tuple[Tuple[str, int], ...] = ()
    output: str = "tsv"
    mixing: str = VANDERMONDE
    balanced_shares: bool = False
    timeout: float = 10.0

    def protocol_config(self) -> ProtocolConfig:
        return ProtocolConfig.build(self.n_dbs, self.r, self.s, self.q, self.mixing, self.balanced_shares)

    def naive_config(self) -> NaiveConfig:
        return NaiveConfig(self.n_dbs, self.r, self.s, FieldModulus(self.q))

    def scheme_config(self):
        return self.protocol_config() if self.scheme == PROPOSED else self.naive_config()


# =============================================================================
# FONTES (flags > arquivo > padrões)
# =============================================================================
def _coerce(name: str, value: Any) -> Any:
    default = next(f for f in fields(RunConfig) if f.name == name).default
    if name == "endpoints":
        if not isinstance(value, list):
            raise ConfigError([Violation("CARRIER", f"endpoints must be host:port[,host:port...], got {value!r}")])
        return tuple(value)
    if isinstance(default, bool):
        text = str(value).lower()
        if text not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigError([Violation("RANGE", f"{name} must be true or false, got {value!r}")])
        return text in ("true", "1", "yes")
    if isinstance(default, float):
        if not isinstance(value, (int, float)):
            raise ConfigError([Violation("RANGE", f"{name} must be a number, got {value!r}")])
        return float(value)
    if isinstance(default, int):
        if not isinstance(value, int):
            raise ConfigError([Violation("RANGE", f"{name} must be an integer, got {value!r}")])
        return value
    return str(value)


def file_values(path: str) -> Dict[str, Any]:
    out, problems, seen = {}, [], {}
    for entry in parse_config_file(path):
        key, lineno = entry["key"], entry["lineno"]
        if key not in KEYS:
            problems.append(f"unknown key {key!r} on line {lineno}")
            continue
        if key in seen:
            problems.append(f"duplicate key {key!r} on line {lineno} (first on line {seen[key]})")
            continue
        seen[key] = lineno
        out[KEYS[key]] = entry["value"]
    if problems:
        raise ConfigSyntaxError(problems)
    return out


def load_run_config(path: Optional[str] = None, flags: Optional[Dict[str, Any]] = None) -> RunConfig:
    merged: Dict[str, Any] = {}
    if path:
        merged.update(file_values(path))
    merged.update({k: v for k, v in (flags or {}).items() if v is not None})
    return replace(RunConfig(), **{k: _coerce(k, v) for k, v in merged.items()})


# =============================================================================
# VERIFICADORES
# =============================================================================
def nearest_valid_s(n_dbs: int, r: int, s: int, balanced: bool = False) -> Tuple[Optional[int], Optional[int]]:
    """Closest s below and above that satisfy N^r | s and, unless balanced, N | r+s."""
    step = n_dbs**r

    def ok(x):
        return x % step == 0 and (balanced or (r + x) % n_dbs == 0)

    below = next((x for x in range((s - 1) // step * step, 0, -step) if ok(x)), None)
    start = (s // step + 1) * step
    above = next((x for x in range(start, start + step * n_dbs + 1, step) if ok(x)), None)
    return below, above


def check_range(cfg: RunConfig) -> List[Dict[str, Any]]:
    errors = []
    if cfg.T < 1:
        errors.append({"category": "RANGE", "type": "T", "message": f"T={cfg.T}: need at least one iteration"})
    if not 0 <= cfg.seed < 2**64:
        errors.append({"category": "RANGE", "type": "seed", "message": "seed must fit in 64 bits"})
    if cfg.scheme not in SCHEMES:
        errors.append({"category": "RANGE", "type": "scheme", "message": f"scheme must be one of {SCHEMES}"})
    if cfg.trainer not in TRAINER_KINDS:
        errors.append({"category": "RANGE", "type": "trainer", "message": f"trainer must be one of {TRAINER_KINDS}"})
    if cfg.output not in FORMATS:
        errors.append({"category": "RANGE", "type": "format", "message": f"format must be one of {FORMATS}"})
    if cfg.timeout <= 0:
        errors.append({"category": "RANGE", "type": "timeout", "message": "timeout must be positive"})
    return errors


def check_scheme_constraints(cfg: RunConfig) -> List[Dict[str, Any]]:
    if cfg.scheme == NAIVE:
        found = []
        if cfg.n_dbs < 1 or cfg.r < 1 or cfg.s < 1:
            found.append(Violation("RANGE", "N, r and s must be positive"))
        if cfg.q < 2 or not isprime(cfg.q):
            found.append(Violation("FIELD", f"q={cfg.q} is not prime"))
    else:
        found = protocol_violations(cfg.n_dbs, cfg.r, cfg.s, cfg.q, cfg.mixing, cfg.balanced_shares)
    errors = []
    for v in found:
        message = v.message
        if v.category == "DIVISIBILITY" and cfg.n_dbs >= 2 and cfg.r >= 1:
            below, above = nearest_valid_s(cfg.n_dbs, cfg.r, cfg.s, cfg.balanced_shares)
            hints = [f"s={x}" for x in (below, above) if x is not None]
            if hints:
                message += f"; nearest valid: {' or '.join(hints)}"
        errors.append({"category": v.category, "type": "constraint", "message": message})
    return errors


def check_carrier(cfg: RunConfig) -> List[Dict[str, Any]]:
    errors = []
    if cfg.carrier not in CARRIERS:
        errors.append({"category": "CARRIER", "type": "carrier", "message": f"carrier must be one of {CARRIERS}"})
    elif cfg.carrier == SOCKET:
        if len(cfg.endpoints) != cfg.n_dbs:
            errors.append(
                {
                    "category": "CARRIER",
                    "type": "endpoints",
                    "message": f"socket carrier needs {cfg.n_dbs} endpoints, got {len(cfg.endpoints)}",
                }
            )
        if cfg.scheme == NAIVE:
            errors.append(
                {"category": "CARRIER", "type": "scheme", "message": "the naive scheme runs on the simulated carrier only"}
            )
    return errors


def run_config_checks(cfg: RunConfig) -> List[Dict[str, Any]]:
    checkers = [check_range, check_scheme_constraints, check_carrier]
    errors = []
    for check_func in checkers:
        errors.extend(check_func(cfg))
    return errors


# =============================================================================
# RELATÓRIO
# =============================================================================
def format_config_report(errors: List[Dict[str, Any]]) -> List[str]:
    lines = ["=" * 60, "CONFIGURATION ERRORS".center(60), "=" * 60]
    for category in ("FIELD", "DIVISIBILITY", "RANGE", "CARRIER"):
        group = [e for e in errors if e["category"] == category]
        if group:
            lines.append(f"({category})")
            lines.extend(f"  - {e['message']}" for e in group)
    lines.append("=" * 60)
    return lines
