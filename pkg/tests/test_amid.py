import json
import random

import numpy as np
import pytest

from provhunt.amid import (
    ATIE,
    AmidSchemaError,
    AmidStore,
    CalibrationError,
    GIoC,
    MatchResult,
    UncalibratedError,
    associate_cti,
    calibrate_threshold,
    load_amid,
    prov_q,
    read_amid_records,
    save_amid,
    score_event,
)
from provhunt.embedding import embed_phrase
from provhunt.lifting import LiftedEvent, ObjectDesc, ProcessDesc, RawEvent
from provhunt.stats import grubbs_one_sided

from conftest import AMID_FIXTURE


def lifted(**fields):
    ev = RawEvent(1, "h", ProcessDesc(1, "p"), ObjectDesc("file", "/x"), "read")
    return LiftedEvent(original=ev,
                       lifted={k: v.split() for k, v in fields.items()})


def naive_score_event(event, store, table, theta_hit):
    """Independent linear-scan implementation of Sim(e, t)."""
    from provhunt.amid import ROLE_FOR_FIELD

    scores = {}
    for a in store.aties:
        total = 0
        for fieldname, phrase in event.lifted.items():
            if not phrase:
                continue
            q = embed_phrase(phrase, table)
            qn = np.linalg.norm(q)
            role = ROLE_FOR_FIELD.get(fieldname, "full")
            for g in a.list_gioc:
                hit = False
                for toks in (g.phrase(), g.component(role)):
                    v = embed_phrase(toks, table)
                    vn = np.linalg.norm(v)
                    cos = 0.0 if qn == 0 or vn == 0 else float(q @ v / (qn * vn))
                    if cos >= theta_hit:
                        hit = True
                if hit:
                    total += 1
        if total:
            scores[a.uid] = total
    return scores


# -- types ---------------------------------------------------------------------

def test_gioc_requires_nonempty_parts():
    with pytest.raises(AmidSchemaError):
        GIoC((), ("read",), ("file",))
    with pytest.raises(AmidSchemaError):
        GIoC(("a",), ("read",), ())


def test_gioc_uid_pattern():
    GIoC(("a",), ("b",), ("c",), technique_uid="T1059")
    GIoC(("a",), ("b",), ("c",), technique_uid="T1059.004")
    with pytest.raises(AmidSchemaError):
        GIoC(("a",), ("b",), ("c",), technique_uid="X999")
    with pytest.raises(AmidSchemaError):
        GIoC(("a",), ("b",), ("c",), technique_uid="T10590")


def test_atie_tags_untagged_giocs():
    a = ATIE("T1105", "x", [], [GIoC(("s",), ("v",), ("o",))])
    assert a.list_gioc[0].technique_uid == "T1105"


def test_atie_rejects_mismatched_gioc():
    with pytest.raises(AmidSchemaError):
        ATIE("T1105", "x", [], [GIoC(("s",), ("v",), ("o",), technique_uid="T1059")])


# -- store load/save ------------------------------------------------------------

def test_load_fixture_counts(store):
    assert len(store.aties) == 11
    assert len(store.giocs) == sum(len(a.list_gioc) for a in store.aties)
    for channel in ("full", "subject", "verb", "object"):
        assert len(store.channels[channel].refs) == len(store.giocs)


def test_load_single_atie(tmp_path, table):
    path = tmp_path / "one.amid"
    rec = {"uid": "T1548.003", "des": "sudo", "list_cti": ["c1"], "list_gioc": [
        {"subject": "malware", "verb": "abuse", "object": "sudo caching",
         "source_sentence": "s", "origin": "extracted_svo"},
        {"subject": "attacker", "verb": "elevate", "object": "root shell",
         "source_sentence": "s2", "origin": "extracted_svo"},
    ]}
    path.write_text(json.dumps(rec) + "\n")
    st = load_amid(path, table)
    assert len(st.aties) == 1
    assert len(st.giocs) == 2
    assert st.theta_q is None  # uncalibrated


def test_duplicate_uid_rejected(tmp_path, table):
    path = tmp_path / "dup.amid"
    rec = {"uid": "T1059", "des": "", "list_cti": [], "list_gioc": [
        {"subject": "a", "verb": "b", "object": "c"}]}
    path.write_text(json.dumps(rec) + "\n" + json.dumps(rec) + "\n")
    with pytest.raises(AmidSchemaError, match="duplicate uid"):
        load_amid(path, table)


def test_malformed_line_names_location(tmp_path, table):
    path = tmp_path / "bad.amid"
    path.write_text('{"uid": "T1059"}\n{not json\n')
    with pytest.raises(AmidSchemaError, match="line 2"):
        load_amid(path, table)


def test_missing_table_is_dependency_error(tmp_path):
    path = tmp_path / "x.amid"
    path.write_text('{"uid": "T1059", "list_gioc": []}\n')
    with pytest.raises(AmidSchemaError, match="embedding table"):
        load_amid(path, None)


def test_roundtrip_100_atie_store(tmp_path, table):
    rng = random.Random(99)
    vocab = list(table.vectors)[:400]
    aties = []
    for i in range(100):
        uid = f"T{1000 + i}"
        giocs = [
            GIoC(
                tuple(rng.sample(vocab, 2)), tuple(rng.sample(vocab, 1)),
                tuple(rng.sample(vocab, 3)),
                source_sentence=f"sentence {i}", technique_uid=uid,
                origin=rng.choice(["extracted_svo", "converted_ioc"]),
            )
            for _ in range(rng.randrange(1, 5))
        ]
        aties.append(ATIE(uid, f"technique {i}", [f"cti{i}"], giocs))
    st = AmidStore.build(aties, table, theta_q=1.25)
    p1 = tmp_path / "a.amid"
    p2 = tmp_path / "b.amid"
    save_amid(st, p1)
    st2 = load_amid(p1, table)
    save_amid(st2, p2)
    # byte-identical modulo key ordering: canonical writer makes it literal
    assert p1.read_text() == p2.read_text()
    h1, recs1 = read_amid_records(p1)
    h2, recs2 = read_amid_records(p2)
    assert h1 == h2
    assert len(recs1) == len(recs2) == 100
    for a, b in zip(recs1, recs2):
        assert a.uid == b.uid and a.list_gioc == b.list_gioc


# -- prov_q ---------------------------------------------------------------------

def test_prov_q_requires_calibration(store, table):
    ev = lifted(syscalltype="read")
    if store.theta_q is None:
        with pytest.raises(UncalibratedError):
            prov_q(ev, store, table)


def test_prov_q_lazagne_example(store, table):
    # lifted browser-credential access must reach the lazagne-derived entry
    store_q = store.theta_q
    store.theta_q = 1.0
    try:
        ev = lifted(source="la1", syscalltype="read",
                    destination="firefox resource login data file")
        results = prov_q(ev, store, table)
        assert "T1555.003" in [r.atie_uid for r in results]
    finally:
        store.theta_q = store_q


def test_prov_q_no_semantic_overlap_empty(store, table):
    store_q = store.theta_q
    store.theta_q = 0.0
    try:
        ev = lifted(destination="clock tick", syscalltype="tick")
        assert prov_q(ev, store, table) == []
    finally:
        store.theta_q = store_q


def test_prov_q_equals_naive_scan(store, table):
    probes = [
        lifted(source="la1", syscalltype="read",
               destination="firefox resource login data file"),
        lifted(destination="etc shadow file", syscalltype="read",
               commandline="show etc shadow file"),
        lifted(destination="unknown network", syscalltype="send"),
        lifted(destination="tmp s file", syscalltype="execute"),
        lifted(source="systemd", destination="var log journal file",
               syscalltype="write"),
    ]
    for ev in probes:
        accelerated, _ = score_event(ev, store, table)
        naive = naive_score_event(ev, store, table, store.theta_hit)
        assert accelerated == naive


def test_prov_q_sorting_and_threshold_monotonicity(store, table):
    store_q = store.theta_q
    try:
        ev = lifted(destination="etc shadow file", syscalltype="read",
                    commandline="show etc shadow file")
        store.theta_q = 0.0
        res0 = prov_q(ev, store, table)
        scores = [r.score for r in res0]
        assert scores == sorted(scores, reverse=True)
        for a, b in zip(res0, res0[1:]):
            if a.score == b.score:
                assert a.atie_uid < b.atie_uid
        seen = {r.atie_uid for r in res0}
        for theta in (1.0, 2.0, 4.0, 10.0):
            store.theta_q = theta
            sub = {r.atie_uid for r in prov_q(ev, store, table)}
            assert sub <= seen
            seen = sub
    finally:
        store.theta_q = store_q


def test_score_decomposition(store, table):
    store_q = store.theta_q
    store.theta_q = 0.0
    try:
        ev = lifted(destination="etc shadow file", syscalltype="read")
        for r in prov_q(ev, store, table):
            assert r.score == sum(len(v) for v in r.field_hits.values())
    finally:
        store.theta_q = store_q


def test_prov_q_deterministic(store, table):
    store_q = store.theta_q
    store.theta_q = 0.5
    try:
        ev = lifted(destination="user downloads invoice pdf exe file",
                    syscalltype="write")
        r1 = prov_q(ev, store, table)
        r2 = prov_q(ev, store, table)
        assert [(r.atie_uid, r.score, r.field_hits) for r in r1] == \
               [(r.atie_uid, r.score, r.field_hits) for r in r2]
    finally:
        store.theta_q = store_q


# -- calibration -----------------------------------------------------------------

def test_calibration_zero_scores_degenerate(table):
    aties = [ATIE("T1059", "", [], [GIoC(("exploit",), ("escalate",), ("sudo",),
                                         technique_uid="T1059")])]
    st = AmidStore.build(aties, table)
    events = [lifted(destination="clock tick") for _ in range(5)]
    theta = calibrate_threshold(events, st, table)
    assert theta == 0.0
    assert st.calibration["degenerate"]
    # any positive-score match now fires
    hit = lifted(destination="sudo root privilege")
    assert [r.atie_uid for r in prov_q(hit, st, table)] == ["T1059"]


def test_calibration_matches_grubbs_boundary(table, store):
    st = load_amid(AMID_FIXTURE, table)
    events = [
        lifted(destination="etc shadow file", syscalltype="read"),
        lifted(destination="var log journal file", syscalltype="write"),
        lifted(destination="clock tick"),
        lifted(destination="user docs quarterly docx file", syscalltype="read"),
    ]
    theta = calibrate_threshold(events, st, table)
    pooled = []
    for ev in events:
        scores, _ = score_event(ev, st, table)
        for a in st.aties:
            pooled.append(float(scores.get(a.uid, 0)))
    expected = grubbs_one_sided(pooled, 0.05)
    want = max(pooled) if expected.degenerate else expected.boundary
    assert theta == pytest.approx(want)
    assert st.calibration["n_scores"] == len(pooled)


def test_calibration_permutation_invariant(table):
    st1 = load_amid(AMID_FIXTURE, table)
    st2 = load_amid(AMID_FIXTURE, table)
    events = [
        lifted(destination="etc shadow file", syscalltype="read"),
        lifted(destination="clock tick"),
        lifted(destination="unknown network", syscalltype="send"),
    ]
    t1 = calibrate_threshold(list(events), st1, table)
    t2 = calibrate_threshold(list(reversed(events)), st2, table)
    assert t1 == pytest.approx(t2)


def test_calibration_needs_scores(table):
    aties = []
    st = AmidStore.build(aties, table)
    with pytest.raises(CalibrationError):
        calibrate_threshold([lifted(destination="clock tick")], st, table)


# -- association ------------------------------------------------------------------

def test_associate_self_similarity(store, table):
    store_q = store.theta_q
    store.theta_q = 0.0
    try:
        t1105 = store.atie("T1105")
        ranked = associate_cti(list(t1105.list_gioc), store, table)
        assert ranked[0][0] == "T1105"
    finally:
        store.theta_q = store_q


def test_associate_empty_input(store, table):
    store_q = store.theta_q
    store.theta_q = 0.0
    try:
        assert associate_cti([], store, table) == []
    finally:
        store.theta_q = store_q


def test_associate_matches_naive(store, table):
    store_q = store.theta_q
    store.theta_q = 0.0
    try:
        giocs = [GIoC(("malware",), ("download",),
                      ("payload", "unknown", "network"))]
        ranked = dict(associate_cti(giocs, store, table))
        # independent linear scan
        naive = {}
        for g in giocs:
            q = embed_phrase(g.phrase(), table)
            qn = np.linalg.norm(q)
            for a in store.aties:
                for tg in a.list_gioc:
                    hit = False
                    for toks in (tg.phrase(), list(tg.subject), list(tg.verb),
                                 list(tg.object_)):
                        v = embed_phrase(toks, table)
                        vn = np.linalg.norm(v)
                        cos = 0.0 if qn == 0 or vn == 0 else float(q @ v / (qn * vn))
                        if cos >= store.theta_hit:
                            hit = True
                    if hit:
                        naive[a.uid] = naive.get(a.uid, 0) + 1
        naive = {u: s for u, s in naive.items() if s > store.theta_q}
        assert ranked == naive
    finally:
        store.theta_q = store_q
