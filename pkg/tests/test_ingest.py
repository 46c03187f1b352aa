import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bugsize.ingest import (
    RowError,
    SchemaError,
    TestLogRecord as LogRecord,
    parse_input_log,
    parse_test_log,
    phase_summary_doc,
    summarize_phases,
)

# Ten-row sample log: four cycles, defect id 31 recurring inside cycle 2,
# defect id 4 recurring across cycles 3 and 4.
SAMPLE_LOG = """cycle,defect_header,defect_id,size
1,2,3,1
1,5,6,3
1,5,7,13
2,13,31,2
2,15,31,16
3,14,10,1
3,23,4,8
3,25,2,1
4,5,13,4
4,42,4,2
"""

# Run counts are synthetic: the sample log carries no run information.
SYNTHETIC_RUNS = [2000, 2500, 2200, 2057]


def test_parse_single_row_fields():
    records = parse_test_log(io.StringIO("cycle,defect_header,defect_id,size\n1,5,7,13\n"))
    assert records == [LogRecord(cycle=1, defect_header=5, defect_id=7, size=13)]


def test_parse_second_sample_row():
    records = parse_test_log(SAMPLE_LOG.encode())
    assert records[4] == LogRecord(cycle=2, defect_header=15, defect_id=31, size=16)


def test_parse_header_only_is_empty():
    assert parse_test_log(io.StringIO("cycle,defect_header,defect_id,size\n")) == []


def test_parse_tab_delimited_auto_detected():
    text = "cycle\tdefect_id\tsize\n1\t7\t13\n"
    records = parse_test_log(io.StringIO(text))
    assert records[0].size == 13
    assert records[0].defect_header == 0  # column absent


def test_parse_severity_carried_as_metadata():
    text = "cycle,defect_id,size,severity\n1,7,13,complex\n"
    assert parse_test_log(io.StringIO(text))[0].severity == "complex"


def test_parse_missing_column_names_it():
    with pytest.raises(SchemaError, match="'size'"):
        parse_test_log(io.StringIO("cycle,defect_id\n1,7\n"))


def test_parse_bad_size_reports_line_number():
    text = "cycle,defect_id,size\n1,7,13\n2,8,oops\n"
    with pytest.raises(RowError, match="line 3"):
        parse_test_log(io.StringIO(text))


def test_parse_negative_size_rejected():
    with pytest.raises(RowError, match="negative"):
        parse_test_log(io.StringIO("cycle,defect_id,size\n1,7,-2\n"))


def test_summarize_sample_cycle_totals():
    summaries = summarize_phases(parse_test_log(SAMPLE_LOG.encode()), SYNTHETIC_RUNS)
    by_phase = {s.phase: s for s in summaries}
    assert by_phase[1].distinct_bugs == 3
    assert by_phase[1].observed_total == 17  # 1 + 3 + 13
    # cycle 2 logs defect 31 twice; the sizes are summed
    assert by_phase[2].distinct_bugs == 1
    assert by_phase[2].observed_total == 18
    assert by_phase[3].observed_total == 10
    assert by_phase[4].observed_total == 6


def test_summarize_cumulative_runs():
    summaries = summarize_phases(parse_test_log(SAMPLE_LOG.encode()), SYNTHETIC_RUNS)
    assert [s.runs_cumulative for s in summaries] == [2000, 4500, 6700, 8757]


def test_summarize_singleton():
    record = LogRecord(cycle=1, defect_header=0, defect_id=9, size=4)
    (summary,) = summarize_phases([record], [1])
    assert summary.runs_cumulative == 1
    assert summary.observed_sizes == (4,)


def test_summarize_missing_cycle_run_count():
    records = parse_test_log(SAMPLE_LOG.encode())
    with pytest.raises(ValueError, match="cycle 4"):
        summarize_phases(records, [100, 100, 100])


def test_summarize_nonpositive_runs_rejected():
    record = LogRecord(cycle=1, defect_header=0, defect_id=9, size=4)
    with pytest.raises(ValueError, match="strictly"):
        summarize_phases([record], [5, 0])


def test_distinct_counts_are_per_phase():
    # defect id 4 appears in cycles 3 and 4 and is counted in both
    summaries = summarize_phases(parse_test_log(SAMPLE_LOG.encode()), SYNTHETIC_RUNS)
    total_per_phase = sum(s.distinct_bugs for s in summaries)
    overall = len({r.defect_id for r in parse_test_log(SAMPLE_LOG.encode())})
    assert total_per_phase == 9
    assert total_per_phase >= overall == 8


record_strategy = st.builds(
    LogRecord,
    cycle=st.integers(min_value=1, max_value=4),
    defect_header=st.integers(min_value=0, max_value=50),
    defect_id=st.integers(min_value=1, max_value=12),
    size=st.integers(min_value=1, max_value=40),
)


@settings(max_examples=60)
@given(records=st.lists(record_strategy, max_size=30), permutation=st.randoms())
def test_aggregation_is_order_independent(records, permutation):
    runs = [10, 20, 30, 40]
    baseline = summarize_phases(records, runs)
    shuffled = list(records)
    permutation.shuffle(shuffled)
    assert summarize_phases(shuffled, runs) == baseline


@settings(max_examples=60)
@given(records=st.lists(record_strategy, max_size=30))
def test_phase_totals_match_brute_force(records):
    summaries = summarize_phases(records, [10, 20, 30, 40])
    for summary in summaries:
        brute = sum(r.size for r in records if r.cycle == summary.phase)
        assert summary.observed_total == brute
        assert summary.distinct_bugs == len(summary.observed_sizes)


def test_per_input_log_counts_runs_and_sizes():
    text = (
        "cycle,result,defect_id\n"
        "1,executed successfully,\n"
        "1,fail,7\n"
        "1,fail,7\n"
        "1,no run,\n"
        "2,executed successfully,\n"
        "2,fail,9\n"
    )
    records, runs = parse_input_log(io.StringIO(text))
    assert runs == [4, 2]
    summaries = summarize_phases(records, runs)
    assert summaries[0].sizes_by_defect == {7: 2}
    assert summaries[1].sizes_by_defect == {9: 1}


def test_phase_summary_doc_schema():
    summaries = summarize_phases(parse_test_log(SAMPLE_LOG.encode()), SYNTHETIC_RUNS)
    doc = phase_summary_doc(summaries)
    assert list(doc["phases"][0]) == ["phase", "runs_cumulative", "distinct_bugs", "sizes"]
    assert doc["phases"][1]["sizes"] == [18]
