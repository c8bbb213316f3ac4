"""Plugging an external scorer into the selection pipeline.

Any process that speaks the line-delimited JSON protocol can replace the
native scorer at inference time: it reads
``{"op": "score", "query": ..., "tokens": [...]}`` per line and answers
``{"probs": [...]}`` with one probability per token.  Here the "external
model" is a child Python process scoring tokens by query overlap; its
probabilities drive the usual top-k selection and marker injection.
"""

import sys

import numpy as np

from hilite import Budget, SubprocessScorer, coalesce, inject, tokenize, topk
from hilite.markup import DEFAULT_FORMAT

# A stand-in for a real scoring backend: score 0.9 for tokens that appear in
# the query, 0.1 otherwise.
CHILD = r"""
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    query_words = {w.lower() for w in req["query"].split()}
    probs = [0.9 if t.lower() in query_words else 0.1 for t in req["tokens"]]
    print(json.dumps({"probs": probs}), flush=True)
"""

query = "Where is the hidden vault key?"
context = "The garden slept. The vault key waits beneath the old mill stone."
ctx = tokenize(context)

with SubprocessScorer([sys.executable, "-c", CHILD]) as scorer:
    scores = scorer.score_tokens(query, ctx.token_texts())

print("token scores from the child process:")
for tok, p in zip(ctx.tokens, scores.probs):
    marker = "*" if p > 0.5 else " "
    print(f"  {marker} p={p:.1f}  {tok.text!r}")

budget = Budget.for_omega(gamma=0.3, omega_size=len(ctx.omega))
mask = topk(scores, ctx.omega, budget.k)
spans = coalesce(mask, ctx, delta=2)
print("\nemphasized with the external scorer's selections:")
print(inject(ctx, spans, DEFAULT_FORMAT))

# wrong-length or malformed responses raise ProtocolError; see
# tests/test_policy.py for the negative cases
assert len(scores.probs) == len(ctx.tokens)
assert np.all((scores.probs > 0) & (scores.probs < 1))
