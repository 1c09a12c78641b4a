import pytest

import main
from protocol.database import DatabaseServer
from protocol.protocol import ProtocolConfig, bootstrap, random_params
from transport.sockets import DatabaseService


def run(capsys, *argv):
    code = main.main(list(argv))
    out = capsys.readouterr().out
    return code, out, out.strip().splitlines()[-1]


@pytest.fixture
def served_dbs():
    """Two databases bootstrapped the way `serve` does it, for seed 0."""
    cfg = ProtocolConfig.build(2, 2, 4)
    states, _ = bootstrap(cfg, random_params(cfg, 0))
    services = [DatabaseService(st.db_index, DatabaseServer(cfg, st).handle).start() for st in states]
    yield ",".join(f"{h}:{p}" for h, p in (s.address for s in services))
    for s in services:
        s.stop()


# =============================================================================
# SIMULATE
# =============================================================================
def test_simulate_default(capsys):
    code, out, last = run(capsys, "simulate", "--T", "3")
    assert code == 0
    assert last == "RESULT status=pass reason=ledger-match"
    assert "download_pir" in out.splitlines()[0]
    assert "total\t-\t18\t18\t18\t48\t36\t66\t102\t3\t6" in out
    assert "symbol size: 17 bits; overall 1734 bits" in out


def test_simulate_naive(capsys):
    code, out, last = run(capsys, "simulate", "--scheme", "naive", "--T", "2")
    assert code == 0
    assert "total\t-\t16\t32\t16\t32\t48\t4" in out


def test_simulate_rejects_bad_divisibility(capsys):
    code, out, last = run(capsys, "simulate", "--s", "5")
    assert code == 2
    assert "nearest valid: s=4 or s=8" in out
    assert last == "RESULT status=error reason=divisibility"


def test_simulate_refuses_the_socket_carrier(capsys):
    code, out, last = run(
        capsys, "simulate", "--carrier", "socket", "--endpoints", "127.0.0.1:7001,127.0.0.1:7002"
    )
    assert code == 2
    assert "serve and client" in out
    assert last == "RESULT status=error reason=invalid-config"


def test_missing_config_file(capsys, tmp_path):
    code, _, last = run(capsys, "simulate", "--config", str(tmp_path / "absent.cfg"))
    assert code == 2
    assert last == "RESULT status=error reason=invalid-config"


def test_config_file_is_read(capsys, tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("N = 2\nr = 3\ns = 8\nbalanced_shares = true\nT = 2\n", encoding="utf-8")
    code, out, last = run(capsys, "simulate", "--config", str(path))
    assert code == 0


# =============================================================================
# REPORT
# =============================================================================
def test_report_default_grid(capsys):
    code, out, last = run(capsys, "report")
    assert code == 0
    assert "N=2 r=8 s=256: difference=-1010 (proposed smaller)" in out
    assert "N=2 r=2 s=4: difference=+10 (naive smaller)" in out
    assert last == "RESULT status=pass reason=report"


def test_report_single_config_as_table(capsys):
    code, out, _ = run(capsys, "report", "--N", "2", "--r", "2", "--s", "4", "--format", "table")
    assert code == 0
    assert "Overhead comparison" in out
    assert "rs(N+1)" in out


@pytest.mark.parametrize("argv", [("--N", "3"), ("--s", "5")])
def test_report_rejects_invalid_single_config(capsys, argv):
    code, out, last = run(capsys, "report", *argv)
    assert code == 2
    assert "Traceback" not in out
    assert last == "RESULT status=error reason=divisibility"


def test_report_names_nearest_valid_s(capsys):
    _, out, _ = run(capsys, "report", "--N", "2", "--r", "2", "--s", "5")
    assert "nearest valid: s=4 or s=8" in out


# =============================================================================
# SERVE / CLIENT
# =============================================================================
def test_client_against_two_databases(capsys, served_dbs):
    code, out, last = run(capsys, "client", "--d", "2", "--endpoints", served_dbs)
    assert code == 0, out
    assert last == "RESULT status=pass reason=ledger-match"


def test_client_connection_failure(capsys):
    service = DatabaseService(1, lambda frame: b"")
    host, port = service.address
    service.stop()
    code, _, last = run(capsys, "client", "--d", "1", "--endpoints", f"{host}:{port},{host}:{port}", "--timeout", "1")
    assert code == 3
    assert last == "RESULT status=error reason=connection-failed"


def test_client_needs_one_endpoint_per_database(capsys):
    code, _, _ = run(capsys, "client", "--d", "1", "--endpoints", "127.0.0.1:1")
    assert code == 2


def test_serve_rejects_bad_index(capsys):
    code, _, _ = run(capsys, "serve", "--db-index", "5")
    assert code == 2


# =============================================================================
# AUDIT
# =============================================================================
def test_audit_ledger(capsys):
    code, out, last = run(capsys, "audit", "--mode", "ledger", "--T", "2")
    assert code == 0
    assert "LOWER-BOUND GAPS" in out


def test_audit_privacy_small_field(capsys):
    code, out, last = run(capsys, "audit", "--mode", "privacy", "--q", "3")
    assert code == 0
    assert last == "RESULT status=pass reason=views-identical"
    assert "previous chooser" in out
    assert "db=1 holds 3 of 6 equations on M_t" in out


def test_audit_privacy_with_new_share_is_a_finding(capsys):
    code, _, last = run(capsys, "audit", "--mode", "privacy", "--q", "3", "--scope", "with-new-share")
    assert code == 1
    assert last == "RESULT status=fail reason=views-differ"


def test_audit_privacy_scale_too_large(capsys):
    code, _, last = run(capsys, "audit", "--mode", "privacy")
    assert code == 2
    assert last == "RESULT status=inconclusive reason=scale-too-large"


def test_audit_witness(capsys):
    code, out, last = run(capsys, "audit", "--mode", "witness", "--q", "3", "--seed", "4")
    assert code == 0
    assert out.count("status=found") == 4
