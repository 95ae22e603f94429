import os

import pytest
from hypothesis import given, strategies as st

from medagents.toolspec import (
    NO_TOOLS_SENTINEL,
    DuplicateToolError,
    ParamSpec,
    ToolDescriptor,
    ToolInvocation,
    ToolRegistry,
    ToolResult,
    UnknownToolError,
    ValidationError,
    dispatch,
    register_tool,
    render_catalog,
    validate_invocation,
)

EDA = ToolDescriptor(
    name="eda",
    description="Profile a CSV file.",
    params=(
        ParamSpec("input_path", "path", required=True),
        ParamSpec("bins", "integer", default=10),
        ParamSpec("ratio", "float"),
        ParamSpec("make_plots", "boolean", default=True),
        ParamSpec("method", "enum", values=("pearson", "spearman"), default="pearson"),
        ParamSpec("ks", "list", item_kind="integer"),
    ),
    output_description="CSV summaries.",
)


def _ok(args, ws):
    return ToolResult("ok", "fine")


def test_register_and_resolve():
    reg = register_tool(ToolRegistry(), EDA, _ok)
    assert reg.resolve("eda") is EDA
    with pytest.raises(DuplicateToolError):
        register_tool(reg, EDA, _ok)
    with pytest.raises(UnknownToolError):
        reg.resolve("nope")


def test_param_spec_invariants():
    with pytest.raises(ValueError):
        ParamSpec("x", "enum", values=())
    with pytest.raises(ValueError):
        ParamSpec("x", "integer", required=True, default=3)
    with pytest.raises(ValueError):
        ParamSpec("x", "integer", default="abc")
    with pytest.raises(ValueError):
        ToolDescriptor("t", "d", (ParamSpec("a", "string"), ParamSpec("a", "string")))


def test_missing_required_named():
    with pytest.raises(ValidationError) as exc:
        validate_invocation(EDA, {})
    assert "input_path" in str(exc.value)


def test_string_coercion_and_defaults():
    out = validate_invocation(EDA, {"input_path": "a.csv", "bins": "5", "ratio": "0.5",
                                    "make_plots": "false", "ks": ["5", 10]})
    assert out == {"input_path": "a.csv", "bins": 5, "ratio": 0.5, "make_plots": False,
                   "method": "pearson", "ks": [5, 10]}


def test_unknown_key_lists_allowed_names():
    with pytest.raises(ValidationError) as exc:
        validate_invocation(EDA, {"inpt_path": "a.csv"})
    msg = str(exc.value)
    assert "inpt_path" in msg and "input_path" in msg and "bins" in msg


def test_errors_are_aggregated():
    with pytest.raises(ValidationError) as exc:
        validate_invocation(EDA, {"bins": "x", "method": "kendall", "bogus": 1})
    assert len(exc.value.problems) == 4  # unknown key, missing path, bad int, bad enum


def test_path_normalized_not_checked():
    out = validate_invocation(EDA, {"input_path": "/does/not/../exist.csv"})
    assert out["input_path"] == os.path.normpath("/does/exist.csv")


@given(bins=st.one_of(st.integers(-1000, 1000), st.integers(-1000, 1000).map(str)),
       plots=st.sampled_from([True, False, "true", "false", "TRUE"]),
       path=st.sampled_from(["a.csv", "./x/../b.csv", "/tmp//c.csv"]))
def test_validation_idempotent(bins, plots, path):
    once = validate_invocation(EDA, {"input_path": path, "bins": bins, "make_plots": plots})
    assert validate_invocation(EDA, once) == once


def test_catalog_sorted_deterministic_and_unique():
    assert render_catalog([]) == NO_TOOLS_SENTINEL
    b = ToolDescriptor("b_tool", "B")
    a = ToolDescriptor("a_tool", "A", (ParamSpec("x", "integer", default=1),))
    text = render_catalog([b, a])
    assert text.index("a_tool") < text.index("b_tool")
    assert text == render_catalog([a, b])
    assert text.count("### a_tool") == 1 and text.count("### b_tool") == 1
    assert "x (integer, optional, default=1)" in text


def test_dispatch_captures_exceptions(tmp_path):
    reg = ToolRegistry()

    def boom(args, ws):
        raise RuntimeError("kaput")

    def writer(args, ws):
        paths = [tmp_path / "a.txt", tmp_path / "b.txt"]
        for p in paths:
            p.write_text("x")
        return ToolResult("ok", "wrote", [str(p) for p in paths])

    reg.register(ToolDescriptor("boom", "x"), boom)
    reg.register(ToolDescriptor("writer", "x"), writer)
    res = dispatch(ToolInvocation("boom", {}), reg)
    assert res.status == "failed" and "kaput" in res.summary
    res = dispatch(ToolInvocation("writer", {}), reg)
    assert res.ok and len(res.artifacts) == 2
    res = dispatch(ToolInvocation("ghost", {}), reg)
    assert res.status == "failed" and "unknown tool" in res.summary


def test_dispatch_rejects_phantom_artifacts():
    reg = ToolRegistry()
    reg.register(ToolDescriptor("liar", "x"), lambda a, w: ToolResult("ok", "s", ["/no/such/file"]))
    assert dispatch(ToolInvocation("liar", {}), reg).status == "failed"


def test_dispatch_validation_failure_is_result():
    reg = register_tool(ToolRegistry(), EDA, _ok)
    res = dispatch(ToolInvocation("eda", {"bins": 3}), reg)
    assert res.status == "failed" and "input_path" in res.summary
