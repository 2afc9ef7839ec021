"""Built-in models, addressable from the CLI with ``--builtin NAME``."""

from __future__ import annotations

# Binary instrument, homogeneous first stage, quadratic outcome equation.
PAPER = """\
# Z binary, X = 2Z + U + eX is homogeneous in Z, Y is quadratic in X
Z ~ Bernoulli(0.3)
U ~ Bernoulli(0.5)
eX ~ Normal(0, 1)
eY ~ Normal(0, 1)
X = 2*Z + U + eX
Y = 2*X^2 + U + eY
@instrument Z
@exposure X
@outcome Y
"""

# Same model with the outcome equation opened up: Y = a X^2 + b X + U + eY.
PAPER_FAMILY = """\
Z ~ Bernoulli(0.3)
U ~ Bernoulli(0.5)
eX ~ Normal(0, 1)
eY ~ Normal(0, 1)
X = 2*Z + U + eX
Y = a*X^2 + b*X + U + eY
@instrument Z
@exposure X
@outcome Y
"""

BUILTINS = {"paper": PAPER, "paper-family": PAPER_FAMILY}

# (label, expected value, exact?) for the built-in `paper` model
PAPER_EXPECTED = (
    ("mean_x", 1.1, False),
    ("ade", 4.4, False),
    ("mean_beta_zx", 2.0, True),
    ("mean_beta_zy", 12.0, False),
    ("reduced_form_dydz", 8.8, False),
    ("wald_true", 6.0, False),
)
