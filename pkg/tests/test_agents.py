import re

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from conftest import DATA
from finvision.agents import (Action, AgentRole, AgentRunner, AgentSettings, TradingDecision, format_decision,
                              parse_decision, render_prompt)
from finvision.agents.prompts import ROLE_SPECS, load_template, placeholders, template_for
from finvision.charting import encode_png
from finvision.errors import AgentError, MissingPlaceholder
from finvision.llm_gateway import ScriptedBackend

PNG = encode_png(np.zeros((2, 2, 3), dtype=np.uint8))


def full_context(**over):
    ctx = {name: f"<{name}>" for role in AgentRole for name in placeholders(template_for(role))}
    ctx.update(current_shares=12.5, current_price=101.0, avg_purchase_price=95.5, total_value=10_000.0,
               cash_reserve=1_234.5, cash_percentage=12.345, unrealized_pl=68.75, unrealized_profit_percentage=5.759)
    ctx.update(over)
    return ctx


# --------------------------------------------------------------------------
# prompts


def test_every_role_has_a_template_and_tier():
    assert [r.value for r in AgentRole] == [
        "Summarizer", "TechnicalAnalyst", "ReflectionPerformanceShort", "ReflectionPerformanceMedium",
        "ReflectionVisual", "Decision"]
    for role in AgentRole:
        assert template_for(role).strip()
    vision = {r for r in AgentRole if ROLE_SPECS[r].vision}
    assert vision == {AgentRole.TECHNICAL_ANALYST, AgentRole.REFLECTION_VISUAL}


def test_summarizer_prompt_opening():
    text = render_prompt(AgentRole.SUMMARIZER, {"ticker": "AAPL", "news_data": "N."})
    assert text.startswith("Analyze the following financial news about AAPL")
    assert "News data: N." in text


def test_rendering_only_substitutes_placeholders():
    tpl = template_for(AgentRole.SUMMARIZER)
    text = render_prompt(AgentRole.SUMMARIZER, {"ticker": "AAPL", "news_data": "N."})
    assert text == tpl.replace("{ticker}", "AAPL").replace("{news_data}", "N.")


def test_missing_placeholder_is_named():
    ctx = full_context()
    del ctx["cash_reserve"]
    with pytest.raises(MissingPlaceholder, match="cash_reserve") as err:
        render_prompt(AgentRole.DECISION, ctx)
    assert err.value.name == "cash_reserve"


def test_unknown_context_keys_ignored():
    a = render_prompt(AgentRole.SUMMARIZER, {"ticker": "X", "news_data": "n"})
    b = render_prompt(AgentRole.SUMMARIZER, {"ticker": "X", "news_data": "n", "extra": 1})
    assert a == b


@pytest.mark.parametrize("over", [{}, {"ticker": "MSFT", "cash_percentage": 99.0}])
def test_decision_prompt_keeps_reserve_rule(over):
    text = render_prompt(AgentRole.DECISION, full_context(**over))
    assert "Maintain at least 10% of the portfolio in cash" in text


def test_decision_prompt_formats_money_to_cents():
    text = render_prompt(AgentRole.DECISION, full_context())
    assert "$1234.50" in text and "12.35%" in text and "$68.75" in text and "5.76%" in text
    assert not re.search(r"\{[a-z_]+(:[^}]*)?\}", text)


def test_decision_placeholders():
    names = set(placeholders(template_for(AgentRole.DECISION)))
    assert {"cash_reserve", "chart_analysis", "news_summary", "reflection_short_term",
            "reflection_medium_term", "market_intelligence", "json_data"} <= names


def test_reflection_templates_share_a_body():
    short = render_prompt(AgentRole.REFLECTION_SHORT, full_context(len_term_data=7))
    medium = render_prompt(AgentRole.REFLECTION_MEDIUM, full_context(len_term_data=30))
    assert short != medium
    assert load_template("reflection_performance") == template_for(AgentRole.REFLECTION_SHORT)


@settings(max_examples=100)
@given(st.text(min_size=1, max_size=30), st.text(min_size=1, max_size=30))
def test_rendering_is_injective(a, b):
    assume(a != b)
    ctx = full_context()
    ta = render_prompt(AgentRole.DECISION, dict(ctx, news_summary=a))
    tb = render_prompt(AgentRole.DECISION, dict(ctx, news_summary=b))
    assert ta != tb


# --------------------------------------------------------------------------
# parsing


def test_sample_response_parses_to_sell_3():
    text = (DATA / "sample_decision_response.md").read_text(encoding="utf-8")
    decision, events = parse_decision(text)
    assert (decision.action, decision.position_size) == (Action.SELL, 3)
    assert decision.explanation.startswith("**Rationale for Selling:**")
    assert "Cash Reserve Compliance" in decision.explanation
    assert events == []


def test_canonical_hold():
    d, events = parse_decision("Recommendation: HOLD\nPosition Size: 0\nExplanation: wait.")
    assert d == TradingDecision(Action.HOLD, 0, "wait.") and events == []


@pytest.mark.parametrize("text", ["buy buy buy!!!", "", "   \n\n", "Recommendation: maybe\nPosition Size: 5",
                                  "Position Size: 4\nExplanation: no action line"])
def test_unparsable_action_falls_back_to_hold(text):
    d, events = parse_decision(text)
    assert (d.action, d.position_size) == (Action.HOLD, 0)
    assert "NoRecommendation" in [e.kind for e in events]


@pytest.mark.parametrize("text,size", [
    ("Recommendation: BUY\nPosition Size: 15%\nExplanation: x", 10),
    ("Recommendation: SELL\nPosition Size: 0\nExplanation: x", 1),
    ("Recommendation: SELL\nPosition Size: -4\nExplanation: x", 1),
    ("Recommendation: BUY\nExplanation: size forgotten", 1),
])
def test_size_out_of_range_is_clamped(text, size):
    d, events = parse_decision(text)
    assert d.position_size == size
    assert [e.kind for e in events] == ["SizeOutOfRange"]


def test_hold_with_size_coerced():
    d, events = parse_decision("Recommendation: HOLD\nPosition Size: 5\nExplanation: x")
    assert (d.action, d.position_size) == (Action.HOLD, 0)
    assert [e.kind for e in events] == ["HoldWithNonzeroSize"]


def test_missing_explanation_uses_remaining_text():
    d, events = parse_decision("Recommendation: BUY\nPosition Size: 6\nStrong trend, buying.")
    assert d.explanation == "Strong trend, buying." and events == []
    d, events = parse_decision("Recommendation: BUY\nPosition Size: 6")
    assert d.explanation.strip() and [e.kind for e in events] == ["MissingExplanation"]


@pytest.mark.parametrize("text", [
    "## **Recommendation:** **BUY**\n**Position Size:** **7%** of portfolio\n**Explanation:** go",
    "recommendation: buy\nposition size: 7 percent\nexplanation: go",
    "> Recommendation: [BUY]\n- Position Size:   7\n- Explanation: go",
])
def test_decorated_labels(text):
    d, _ = parse_decision(text)
    assert (d.action, d.position_size) == (Action.BUY, 7)


def test_first_recommendation_line_wins():
    d, _ = parse_decision("Recommendation: SELL\nPosition Size: 2\nExplanation: a\nRecommendation: BUY")
    assert d.action is Action.SELL


def test_decision_invariants():
    for bad in [("HOLD", 3, "x"), ("BUY", 0, "x"), ("SELL", 11, "x"), ("BUY", 5, "  "), ("SHORT", 5, "x")]:
        with pytest.raises(ValueError):
            TradingDecision(*bad)


explanations = st.text(st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=200).map(str.strip).filter(bool)


@settings(max_examples=1000, deadline=None)
@given(st.sampled_from(["BUY", "SELL", "HOLD"]), st.integers(1, 10), explanations)
def test_format_parse_round_trip(action, size, explanation):
    d = TradingDecision(action, 0 if action == "HOLD" else size, explanation)
    parsed, events = parse_decision(format_decision(d))
    assert parsed == d and events == []


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=300))
def test_parser_never_raises(text):
    d, _ = parse_decision(text)
    assert isinstance(d, TradingDecision)


# --------------------------------------------------------------------------
# runner


def test_invoke_passthrough_and_log():
    runner = AgentRunner(ScriptedBackend(["Strategy 1: uptrend | buy"]))
    out = runner.invoke(AgentRole.TECHNICAL_ANALYST, full_context(), [PNG], date="2023-06-01")
    assert out == "Strategy 1: uptrend | buy"
    (entry,) = runner.run_log
    assert (entry.date, entry.role, entry.response) == ("2023-06-01", "TechnicalAnalyst", out)
    assert len(entry.request_digest) == 64


def test_text_only_role_rejects_images():
    runner = AgentRunner(ScriptedBackend(["x"]))
    with pytest.raises(AgentError, match="text-only"):
        runner.invoke(AgentRole.SUMMARIZER, full_context(), [PNG])


def test_gateway_errors_tagged_with_role_and_date():
    runner = AgentRunner(ScriptedBackend([]))
    with pytest.raises(AgentError, match=r"\[Summarizer, 2023-06-02\]"):
        runner.invoke(AgentRole.SUMMARIZER, full_context(), date="2023-06-02")


def test_models_and_temperatures_per_role():
    runner = AgentRunner(ScriptedBackend([]))
    dec = runner.build_request(AgentRole.DECISION, full_context())
    summ = runner.build_request(AgentRole.SUMMARIZER, full_context())
    assert (dec.model, dec.temperature) == ("o1-mini", 1.0)
    assert (summ.model, summ.temperature) == ("gpt-4o-mini", 0.3)


def test_malformed_retry_flag():
    script = ["no idea", "Recommendation: BUY\nPosition Size: 4\nExplanation: ok"]
    plain = AgentRunner(ScriptedBackend(script))
    d, _ = plain.decide(full_context())
    assert d.action is Action.HOLD
    retry = AgentRunner(ScriptedBackend(script), AgentSettings(retry_malformed=True))
    d, events = retry.decide(full_context())
    assert (d.action, d.position_size) == (Action.BUY, 4)
    assert [e.kind for e in events] == ["NoRecommendation"]
    assert len(retry.run_log) == 2
