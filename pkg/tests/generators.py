"""Random sg-polynomial systems shared by the engine and acceptance tests."""

from odecalc.engine import LENGTH, LinearOdeSystem, LOdeProblem
from odecalc.expr import parse

# constant, x-dependent and state-dependent building blocks
_ATOMS = [
    "{c}",
    "x",
    "{c}*x",
    "sg(x - {c})",
    "{c}*sg(f.{i} - {c})",
    "sg({c} - f.{i})*x",
    "sg(f.{i})*sg(f.{j} + {c})",
]


def random_entry(rng, d, state_dependent):
    atoms = _ATOMS if state_dependent else _ATOMS[:4]
    terms = []
    for _ in range(rng.randint(1, 2)):
        a = rng.choice(atoms)
        terms.append(a.format(c=rng.randint(-5, 5), i=rng.randrange(d), j=rng.randrange(d)))
    return parse(" + ".join(terms))


def random_system(rng, state_dependent, d=None):
    d = d or rng.randint(1, 3)
    return LinearOdeSystem(
        G=tuple(rng.randint(-5, 5) for _ in range(d)),
        A=tuple(tuple(random_entry(rng, d, state_dependent) for _ in range(d)) for _ in range(d)),
        B=tuple(random_entry(rng, d, state_dependent) for _ in range(d)),
    )


def random_problem(rng, driver=LENGTH):
    """A linear L-ODE whose rhs mixes state-dependent sg terms with one
    plain state term."""
    d = rng.randint(1, 2)
    rhs = [f"({random_entry(rng, d, True)}) + {rng.randint(-3, 3)}*f.{rng.randrange(d)}" for _ in range(d)]
    return LOdeProblem(
        rhs=tuple(parse(r) for r in rhs),
        init=tuple(rng.randint(-9, 9) for _ in range(d)),
        driver=driver,
    )
