"""Frozen-solver clients: prompt rendering, output parsing, transport.

The solver is a black box that maps (query, emphasized context) to text.
This module renders the consistent prompt template, talks to an HTTP
endpoint with bounded retries, parses the two structured output contracts
(short answer inside <answer>...</answer>, ranking inside
<FINAL_JSON>...</FINAL_JSON>), and provides deterministic in-process stand-ins
for desk-scale verification:

* OracleSolver answers correctly iff the marker pairs in the emphasized
  context enclose at least a configured fraction of the instance's gold
  evidence bytes.  A "bridging" variant additionally demands that at least
  one byte of non-evidence context survives in the input, which penalizes
  deletion-based selection the way connective-context loss does.
* ScriptedSolver replays canned responses (optionally failing first) for
  transport and parsing tests.

Unparseable or unreachable solver output is an episode-level event (zero
reward, flagged), never a crash.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass

from .errors import (
    ConfigError,
    ParseError,
    ProtocolError,
    SolverUnavailableError,
    TemplateError,
)
from .markup import MarkerFormat, DEFAULT_FORMAT, scan_markers

CONTEXT_PLACEHOLDER = "{context}"
INSTRUCTION_PLACEHOLDER = "{instruction}"

ANSWER_TAG = "answer-tag"
FINAL_JSON = "final-json"
FREE_TEXT = "free-text"

_ANSWER_RE = re.compile(r"<answer>(.*?)</answer>", re.DOTALL)
_FINAL_JSON_RE = re.compile(r"<FINAL_JSON>(.*?)</FINAL_JSON>", re.DOTALL)


@dataclass(frozen=True)
class PromptTemplate:
    """Prompt body with exactly one context and one instruction placeholder."""

    name: str
    body: str
    output_contract: str = FREE_TEXT

    def __post_init__(self):
        for ph in (CONTEXT_PLACEHOLDER, INSTRUCTION_PLACEHOLDER):
            if self.body.count(ph) != 1:
                raise TemplateError(
                    f"template {self.name!r} must contain exactly one {ph}"
                )


TEMPLATES: dict[str, PromptTemplate] = {
    "basic": PromptTemplate(
        name="basic",
        body=(
            "[CONTEXT]\n"
            "{context}\n"
            "(The <start_important>...<end_important> tags indicate emphasized evidence.)\n"
            "\n"
            "[INSTRUCTION]\n"
            "Answer the query using the context above.\n"
            "{instruction}\n"
        ),
        output_contract=FREE_TEXT,
    ),
    "qa": PromptTemplate(
        name="qa",
        body=(
            "You are a helpful, precise QA assistant.\n"
            "Follow the format EXACTLY:\n"
            "You MUST output ONLY the short answer phrase inside <answer>...</answer>.\n"
            "No explanation, no extra words.\n"
            "Some parts of the EVIDENCE are wrapped in <start_important> ... <end_important>.\n"
            "\n"
            "QUESTION:\n"
            "{instruction}\n"
            "\n"
            "EVIDENCE:\n"
            "{context}\n"
            "\n"
            "OUTPUT:\n"
        ),
        output_contract=ANSWER_TAG,
    ),
    "rerank": PromptTemplate(
        name="rerank",
        body=(
            "Given a user's history summary and a list of candidate items, re-rank the"
            " candidates according to their likelihood of being the next item of interest"
            " to the user based on the user's historical interactions. Each entry should"
            ' contain an "id" and a "score" reflecting the predicted relevance of the'
            " candidate to the user. Ensure that the JSON is well-formed and encapsulated"
            " within <FINAL_JSON> tags. Some parts of the history are wrapped in"
            " <start_important> ... <end_important>. Treat those spans as especially"
            " important signals about the user preferences.\n"
            "\n"
            "Example Final JSON Output:\n"
            "\n"
            "<FINAL_JSON>\n"
            '[{"id": 1,"score": 8.5}, {"id":2,"score":6.0}, {"id": 10, "score": 0.7}]\n'
            "</FINAL_JSON>\n"
            "\n"
            "[USER_HISTORY_SUMMARY]\n"
            "{context}\n"
            "\n"
            "[CANDIDATES]\n"
            "{instruction}\n"
            "\n"
            "Final JSON Output:\n"
        ),
        output_contract=FINAL_JSON,
    ),
}


def render_prompt(query: str, emphasized_context: str, template: PromptTemplate) -> str:
    """Substitute both placeholders.

    Single-pass splice: substituted material is inserted verbatim and never
    re-scanned, so contexts containing brace markers or placeholder-looking
    text cannot corrupt the template.
    """
    body = template.body
    positions = sorted(
        (
            (body.index(CONTEXT_PLACEHOLDER), CONTEXT_PLACEHOLDER, emphasized_context),
            (body.index(INSTRUCTION_PLACEHOLDER), INSTRUCTION_PLACEHOLDER, query),
        )
    )
    out = []
    cursor = 0
    for pos, placeholder, value in positions:
        out.append(body[cursor:pos])
        out.append(value)
        cursor = pos + len(placeholder)
    out.append(body[cursor:])
    return "".join(out)


@dataclass
class SolverOutput:
    """Raw solver text plus parse result and transport bookkeeping."""

    raw_text: str
    parsed: object | None = None
    latency: float = 0.0
    attempt_count: int = 1
    flagged: bool = False


def parse_answer(raw: str) -> str:
    """Extract the first well-formed <answer>...</answer> payload."""
    m = _ANSWER_RE.search(raw)
    if not m:
        raise ParseError("no <answer>...</answer> payload found")
    return m.group(1).strip()


def parse_final_json(raw: str) -> list:
    """Extract the first <FINAL_JSON> block and return candidate ids sorted
    by score descending (ties: id ascending)."""
    m = _FINAL_JSON_RE.search(raw)
    if not m:
        raise ParseError("no <FINAL_JSON>...</FINAL_JSON> payload found")
    try:
        records = json.loads(m.group(1))
    except json.JSONDecodeError as exc:
        raise ParseError(f"FINAL_JSON payload is not valid JSON: {exc}") from exc
    if not isinstance(records, list):
        raise ParseError("FINAL_JSON payload must be a JSON array")
    scored = []
    for rec in records:
        if not isinstance(rec, dict) or "id" not in rec or "score" not in rec:
            raise ParseError(f"malformed FINAL_JSON record: {rec!r}")
        try:
            scored.append((rec["id"], float(rec["score"])))
        except (TypeError, ValueError) as exc:
            raise ParseError(f"non-numeric score in record: {rec!r}") from exc
    try:
        scored.sort(key=lambda pair: (-pair[1], pair[0]))
    except TypeError as exc:  # mixed-type ids are not orderable
        raise ParseError(f"ids are not mutually orderable: {exc}") from exc
    return [item_id for item_id, _ in scored]


def parse_output(raw: str, contract: str):
    """Dispatch on the template's output contract."""
    if contract == ANSWER_TAG:
        return parse_answer(raw)
    if contract == FINAL_JSON:
        return parse_final_json(raw)
    return raw.strip()


# ---------------------------------------------------------------------------
# HTTP transport
# ---------------------------------------------------------------------------


@dataclass
class EndpointConfig:
    """Where and how to reach a generation endpoint.

    Wire format: POST {"prompt", "max_tokens", "temperature"} (+ Authorization
    header when auth_token is set), response {"text": ...}.
    """

    url: str
    auth_token: str = ""
    timeout: float = 30.0
    max_retries: int = 3
    backoff_base: float = 0.5
    max_tokens: int = 256
    temperature: float = 0.0


def call_http(prompt: str, endpoint: EndpointConfig) -> SolverOutput:
    """POST the prompt, retrying transport failures with exponential backoff.

    At most ``max_retries`` network attempts are made; exhausting them
    raises SolverUnavailableError.  A reachable endpoint returning an
    off-contract payload raises ProtocolError immediately (retrying a
    deterministic protocol violation would not help).
    """
    import requests

    headers = {}
    if endpoint.auth_token:
        headers["Authorization"] = f"Bearer {endpoint.auth_token}"
    body = {
        "prompt": prompt,
        "max_tokens": endpoint.max_tokens,
        "temperature": endpoint.temperature,
    }
    start = time.monotonic()
    last_exc: Exception | None = None
    for attempt in range(1, endpoint.max_retries + 1):
        try:
            resp = requests.post(
                endpoint.url, json=body, headers=headers, timeout=endpoint.timeout
            )
            resp.raise_for_status()
            payload = resp.json()
            if not isinstance(payload, dict) or "text" not in payload:
                raise ProtocolError("solver response missing 'text'")
            return SolverOutput(
                raw_text=str(payload["text"]),
                latency=time.monotonic() - start,
                attempt_count=attempt,
            )
        except ProtocolError:
            raise
        except ValueError as exc:  # undecodable JSON body
            raise ProtocolError(f"solver returned invalid JSON: {exc}") from exc
        except requests.RequestException as exc:
            last_exc = exc
            if attempt < endpoint.max_retries:
                time.sleep(endpoint.backoff_base * (2 ** (attempt - 1)))
    raise SolverUnavailableError(
        f"{endpoint.url} failed after {endpoint.max_retries} attempts: {last_exc}"
    )


class HTTPSolver:
    """Solver client rendering a template and calling an endpoint."""

    def __init__(self, endpoint: EndpointConfig, template: PromptTemplate):
        self.endpoint = endpoint
        self.template = template
        self.output_contract = template.output_contract

    def solve(self, query: str, emphasized_context: str, instance=None) -> SolverOutput:
        prompt = render_prompt(query, emphasized_context, self.template)
        return call_http(prompt, self.endpoint)


# ---------------------------------------------------------------------------
# Deterministic in-process solvers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleSolverConfig:
    """Coverage threshold plus the optional connective-context requirement."""

    coverage_threshold: float = 0.8
    require_connective: bool = False
    distractor_answer: str = "unknown"

    def __post_init__(self):
        if not 0.0 <= self.coverage_threshold <= 1.0:
            raise ValueError("coverage_threshold must lie in [0, 1]")


def evidence_coverage(
    emphasized_context: str,
    original_context: str,
    evidence_spans: list[tuple[int, int]],
    fmt: MarkerFormat,
) -> tuple[float, bool]:
    """Fraction of gold-evidence bytes enclosed by marker pairs, plus whether
    any non-evidence context byte is present in the input.

    When stripping the markers reproduces the original context exactly, the
    enclosed regions map one-to-one onto original byte offsets and coverage
    is an interval intersection.  Inputs that altered the context (pruning,
    rewriting) cannot be localized, so their tagged regions count evidence
    only by exact substring containment.
    """
    data = emphasized_context.encode("utf-8")
    original = original_context.encode("utf-8")
    stripped, regions = scan_markers(data, fmt)
    total = sum(end - start for start, end in evidence_spans)
    if total == 0:
        return 0.0, len(stripped) > 0
    if stripped == original:
        covered = 0
        for es, ee in evidence_spans:
            for ms, me in regions:
                lo, hi = max(es, ms), min(ee, me)
                if hi > lo:
                    covered += hi - lo
        return covered / total, len(original) > total
    # destructive input: credit evidence spans whose bytes survived verbatim
    # inside some enclosed region
    covered = 0
    found = 0
    for es, ee in evidence_spans:
        chunk = original[es:ee]
        if any(chunk in stripped[ms:me] for ms, me in regions):
            covered += ee - es
        if chunk in stripped:
            found += ee - es
    return covered / total, len(stripped) > found


def oracle_solve(
    query: str,
    emphasized_context: str,
    instance,
    cfg: OracleSolverConfig,
    fmt: MarkerFormat = DEFAULT_FORMAT,
) -> SolverOutput:
    """Answer correctly iff tagged coverage of the gold evidence reaches the
    threshold (and, for the bridging variant, some connective context
    survives).  Fully deterministic; replies on the answer-tag contract."""
    coverage, has_connective = evidence_coverage(
        emphasized_context, instance.context, instance.evidence_spans or [], fmt
    )
    correct = coverage >= cfg.coverage_threshold
    if cfg.require_connective:
        correct = correct and has_connective
    answer = str(instance.gold) if correct else cfg.distractor_answer
    return SolverOutput(raw_text=f"<answer>{answer}</answer>", parsed=None)


class OracleSolver:
    """Trainer-facing wrapper around :func:`oracle_solve`."""

    output_contract = ANSWER_TAG

    def __init__(self, cfg: OracleSolverConfig, fmt: MarkerFormat = DEFAULT_FORMAT):
        self.cfg = cfg
        self.fmt = fmt

    def solve(self, query: str, emphasized_context: str, instance=None) -> SolverOutput:
        if instance is None or instance.evidence_spans is None:
            raise ConfigError(
                "oracle solver requires instances with gold evidence spans"
            )
        return oracle_solve(query, emphasized_context, instance, self.cfg, self.fmt)


class ScriptedSolver:
    """Replays canned raw responses; can fail the first n calls.

    Useful as an echo fixture and for retry/parsing tests.
    """

    def __init__(self, responses: list[str], fail_first: int = 0,
                 output_contract: str = ANSWER_TAG):
        self.responses = list(responses)
        self.fail_first = fail_first
        self.output_contract = output_contract
        self.calls = 0

    def solve(self, query: str, emphasized_context: str, instance=None) -> SolverOutput:
        self.calls += 1
        if self.calls <= self.fail_first:
            raise SolverUnavailableError("scripted failure")
        raw = self.responses[(self.calls - 1) % len(self.responses)]
        return SolverOutput(raw_text=raw)
