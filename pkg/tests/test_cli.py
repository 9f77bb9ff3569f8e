import json
import subprocess
import sys

import pytest

from conftest import GOLDEN
from kbqa import cli
from kbqa.genpipe import read_records

FIXTURE = ["--kb", "F1", "--lex", "L1", "--emb", "fixture"]
THEATER_Q = "which theater staged a production of bob boyett"


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def run_process(*argv):
    return subprocess.run([sys.executable, "-m", "kbqa.cli", *argv], capture_output=True, check=False)


def test_ask_theater_two_hop(capsys):
    code, out, _ = run(capsys, "ask", *FIXTURE, "--q", THEATER_Q)
    assert code == 0
    assert out == "(AND Theater (JOIN staged_here (JOIN producer m.boyett)))\n{m.gershwin, m.lyric}\n"


def test_ask_popularity_error_mode(capsys):
    code, out, _ = run(capsys, "ask", *FIXTURE, "--q", "which theater staged the lyric")
    assert code == 0
    assert out == "no candidate for anchors m.lyric_opera\n"


def test_ask_no_mention(capsys):
    code, out, _ = run(capsys, "ask", *FIXTURE, "--q", "how many seats")
    assert (code, out) == (0, "no entity linked\n")


def test_ask_byte_stable():
    first = run_process("ask", *FIXTURE, "--q", THEATER_Q)
    second = run_process("ask", *FIXTURE, "--q", THEATER_Q)
    assert first.returncode == 0
    assert first.stdout == second.stdout


def test_ask_reads_questions_from_stdin():
    proc = subprocess.run([sys.executable, "-m", "kbqa.cli", "ask", *FIXTURE],
                          input=THEATER_Q + "\nhow many seats\n", capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "{m.gershwin, m.lyric}" in proc.stdout
    assert "no entity linked" in proc.stdout


def test_missing_flag_prints_usage(capsys):
    code, _, err = run(capsys, "ask", "--kb", "F1", "--q", "x")
    assert code == 1
    assert "usage: kbqa ask" in err and "--lexicon" in err


def test_unknown_subcommand(capsys):
    code, _, err = run(capsys, "frobnicate")
    assert code == 1
    assert "usage" in err


def test_missing_file_exits_one(capsys, tmp_path):
    code, _, err = run(capsys, "load-check", "--kb-ontology", str(tmp_path / "no.tsv"),
                       "--kb-facts", str(tmp_path / "no.tsv"))
    assert code == 1 and "error" in err


def test_internal_error_exits_two(capsys, monkeypatch):
    def boom(args):
        raise RuntimeError("unexpected")

    monkeypatch.setitem(cli.COMMANDS, "load-check", (boom, "x"))
    code, _, err = run(capsys, "load-check", "--kb", "F1")
    assert code == 2 and "RuntimeError" in err


def test_load_check(capsys):
    code, out, _ = run(capsys, "load-check", "--kb", "F1")
    assert code == 0
    assert out.splitlines() == ["entities\t6", "classes\t3", "relations\t3", "facts\t12", "type_facts\t6"]


def test_link(capsys):
    code, out, _ = run(capsys, "link", *FIXTURE, "--q", "what did bob boyett produce")
    assert code == 0
    assert out == "9\t19\tbob boyett\tm.boyett\t5000\n"


def test_enumerate_and_rank(capsys):
    code, out, _ = run(capsys, "enumerate", *FIXTURE, "--anchors", "m.boyett")
    assert code == 0
    lines = out.splitlines()
    assert "(AND Theater (JOIN staged_here (JOIN producer m.boyett)))" in lines
    assert lines == sorted(set(lines)) or len(lines) == len(set(lines))
    code, out, _ = run(capsys, "rank", *FIXTURE, "--q", THEATER_Q)
    assert code == 0
    top = out.splitlines()[0].split("\t")
    assert top[1] == "(AND Theater (JOIN staged_here (JOIN producer m.boyett)))"


def test_sparql_matches_golden(capsys):
    for line in (GOLDEN / "f1_sparql.tsv").read_text().splitlines()[:10]:
        sexpr, sparql = line.split("\t")
        code, out, _ = run(capsys, "sparql", "--kb", "F1", "--expr", sexpr)
        assert code == 0
        assert out == sparql + "\n"


def test_sparql_unsupported_shape(capsys):
    code, _, err = run(capsys, "sparql", "--kb", "F1", "--expr", "(COUNT (GE capacity 1))")
    assert code == 1 and "function" in err


def test_generate_split_eval(capsys, tmp_path):
    records = tmp_path / "records.jsonl"
    code, _, _ = run(capsys, "generate", *FIXTURE, "--n", "30", "--out", str(records))
    assert code == 0
    recs = read_records(records.open())
    assert len(recs) == 30
    code, out, _ = run(capsys, "generate", "--kb", "F1", "--templates", "--max-relations", "1")
    assert code == 0 and "(ARGMAX Theater capacity)" in out
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json}\n")
    code, _, err = run(capsys, "split", "--kb", "F1", "--records", str(bad), "--out", str(tmp_path / "s"))
    assert code == 1 and "error" in err

    gold = tmp_path / "gold.jsonl"
    gold.write_text("".join(json.dumps(dict(json.loads(r.to_json()), level="iid")) + "\n" for r in recs))
    pred = tmp_path / "pred.tsv"
    pred.write_text("".join(f"{r.qid}\t{r.s_expression}\n" for r in recs[:15]))
    out_tsv = tmp_path / "report.tsv"
    code, out, _ = run(capsys, "eval", "--kb", "F1", "--pred", str(pred), "--gold", str(gold), "--out", str(out_tsv))
    assert code == 0
    rows = out_tsv.read_text().splitlines()
    assert rows[0] == "split\tmetric\tvalue"
    assert "overall\tEM\t50.00" in rows
    assert (tmp_path / "report_levels.png").stat().st_size > 0
    assert (tmp_path / "report_bounds.png").stat().st_size > 0
    assert "Overall" in out


def test_split_command(capsys, tmp_path):
    from kbqa.genpipe import write_records
    from kbqa.kbstore import dump_facts, dump_ontology
    from kbqa.synthetic import synthetic_corpus

    kb, recs = synthetic_corpus(1)
    kb_dir = tmp_path / "kb"
    kb_dir.mkdir()
    with (kb_dir / "ontology.tsv").open("w") as fh:
        dump_ontology(kb, fh)
    with (kb_dir / "facts.tsv").open("w") as fh:
        dump_facts(kb, fh)
    with (tmp_path / "all.jsonl").open("w") as fh:
        write_records(recs, fh)
    out = tmp_path / "split"
    code, _, _ = run(capsys, "split", "--kb", str(kb_dir), "--records", str(tmp_path / "all.jsonl"), "--out", str(out))
    assert code == 0
    sizes = [len(read_records((out / f"{name}.jsonl").open())) for name in ("train", "dev", "test")]
    assert 0 < sum(sizes) <= len(recs)
    assert all(sizes)
