"""Logistic-regression analyses linking strategies and profiles to donations.

All models share one maximum-likelihood fitter (iteratively reweighted least
squares) with Wald standard errors from the inverse observed information.
Trait scores are standardized before entering a model; strategy exposure is
the per-dialogue count of each strategy (a presence indicator is available
behind a flag). The donation outcome is dichotomized: 1 iff the amount is
positive, with an absent amount counting as zero.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm

from .corpus import (
    BIG_FIVE,
    DECISION_STYLE,
    DEMOGRAPHIC_CATEGORICAL,
    MORAL_FOUNDATIONS,
    SCHWARTZ,
    STRATEGIES,
    Corpus,
    ParticipantProfile,
    PersuadeeAct,
    Role,
    StrategyLabel,
    dedup_first_task,
)
from .errors import DegenerateGroupError

TRAIT_BLOCKS = {
    "big5": BIG_FIVE,
    "moral": MORAL_FOUNDATIONS,
    "schwartz": SCHWARTZ,
    "decision": DECISION_STYLE,
}

# Reference level per categorical demographic, matching the contrast labels
# in the coefficient tables.
REFERENCE_LEVELS = {
    "sex": "female",
    "race": "other",
    "education": "four_year_college",
    "marital": "married",
    "employment": "employed",
    "religion": "atheist",
    "ideology": "conservative",
}

MAX_ITER = 100
TOL = 1e-8
DIVERGENCE_BOUND = 50.0  # |beta| beyond this flags separation


def dichotomize(amount: Optional[float]) -> int:
    """1 iff a positive amount was given; absent counts as none."""
    if amount is None:
        return 0
    if amount < 0:
        raise ValueError(f"negative amount {amount}")
    return int(amount > 0)


def standardize(column: Sequence[float]) -> np.ndarray:
    """Center to mean 0 and scale to population standard deviation 1."""
    column = np.asarray(column, dtype=float)
    sd = column.std()
    if sd == 0:
        raise ValueError("cannot standardize a constant column")
    return (column - column.mean()) / sd


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


@dataclass
class DesignMatrix:
    names: list[str]
    X: np.ndarray  # (n, p)
    y: np.ndarray  # (n,) in {0, 1}

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError(f"shape mismatch: X {self.X.shape}, y {self.y.shape}")
        if len(self.names) != self.X.shape[1]:
            raise ValueError("one name per column required")
        if not set(np.unique(self.y)) <= {0.0, 1.0}:
            raise ValueError("outcome must be binary")


@dataclass
class GlmResult:
    names: list[str]
    coef: np.ndarray
    se: np.ndarray
    z: np.ndarray
    p: np.ndarray
    stars: list[str]
    loglik: float
    converged: bool
    n_iter: int
    n_obs: int
    pruned: list[str] = field(default_factory=list)
    diagnostic: Optional[str] = None

    def __getitem__(self, name: str) -> dict:
        i = self.names.index(name)
        return {
            "coef": float(self.coef[i]),
            "se": float(self.se[i]),
            "z": float(self.z[i]),
            "p": float(self.p[i]),
            "stars": self.stars[i],
        }

    def to_text(self, title: str = "") -> str:
        width = max(len(n) for n in self.names)
        lines = []
        if title:
            lines.append(title)
        lines.append(f"{'predictor':<{width}}  {'coef':>8}  {'se':>8}  {'z':>8}  {'p':>8}  sig")
        for i, name in enumerate(self.names):
            lines.append(
                f"{name:<{width}}  {self.coef[i]:8.3f}  {self.se[i]:8.3f}"
                f"  {self.z[i]:8.3f}  {self.p[i]:8.4f}  {self.stars[i]}"
            )
        lines.append(
            f"n={self.n_obs}  log-likelihood={self.loglik:.3f}  "
            f"converged={self.converged} ({self.n_iter} iterations)"
        )
        if self.pruned:
            lines.append(f"pruned columns: {', '.join(self.pruned)}")
        if self.diagnostic:
            lines.append(self.diagnostic)
        return "\n".join(lines)

    def csv_rows(self) -> list[list]:
        rows = [["predictor", "coef", "se", "z", "p", "sig"]]
        for i, name in enumerate(self.names):
            rows.append(
                [name, repr(float(self.coef[i])), repr(float(self.se[i])),
                 repr(float(self.z[i])), repr(float(self.p[i])), self.stars[i]]
            )
        return rows

    def write_csv(self, path: str | Path, header_comment: Optional[str] = None) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            csv.writer(fh).writerows(self.csv_rows())


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    exp = np.exp(eta[~pos])
    out[~pos] = exp / (1.0 + exp)
    return out


def _prune_columns(dm: DesignMatrix) -> tuple[DesignMatrix, list[str]]:
    """Drop degenerate and linearly dependent columns, keeping earlier ones."""
    X = dm.X
    keep = []
    pruned = []
    for j in range(X.shape[1]):
        column = X[:, j]
        if np.ptp(column) == 0 and not (j == 0 and np.all(column == 1.0)):
            pruned.append(dm.names[j])
            continue
        candidate = X[:, keep + [j]]
        if np.linalg.matrix_rank(candidate) == len(keep) + 1:
            keep.append(j)
        else:
            pruned.append(dm.names[j])
    if not keep:
        raise ValueError("no usable columns after pruning")
    return DesignMatrix([dm.names[j] for j in keep], X[:, keep], dm.y), pruned


def fit_logit(dm: DesignMatrix, max_iter: int = MAX_ITER, tol: float = TOL) -> GlmResult:
    """Maximum-likelihood logistic regression via IRLS.

    Convergence when max |change in coefficients| < tol. Standard errors come
    from the inverse observed information; p-values are two-tailed Wald tests.
    Perfect separation is flagged (converged=False with a diverging-coefficient
    diagnostic), never silently accepted.
    """
    dm, pruned = _prune_columns(dm)
    X, y = dm.X, dm.y
    n, k = X.shape
    if n <= k:
        raise ValueError(f"need more rows ({n}) than columns ({k})")

    beta = np.zeros(k)
    converged = False
    diagnostic = None
    iteration = 0
    for iteration in range(1, max_iter + 1):
        eta = X @ beta
        p = np.clip(_sigmoid(eta), 1e-12, 1 - 1e-12)
        w = p * (1.0 - p)
        z = eta + (y - p) / w
        xtw = X.T * w
        try:
            beta_new = np.linalg.solve(xtw @ X, xtw @ z)
        except np.linalg.LinAlgError:
            diagnostic = "information matrix became singular"
            break
        delta = np.max(np.abs(beta_new - beta))
        beta = beta_new
        if np.max(np.abs(beta)) > DIVERGENCE_BOUND:
            worst = dm.names[int(np.argmax(np.abs(beta)))]
            diagnostic = (
                f"coefficient for {worst} is diverging "
                f"(|beta|={np.max(np.abs(beta)):.1f}); data may be separated"
            )
            break
        if delta < tol:
            converged = True
            break

    eta = X @ beta
    p_hat = np.clip(_sigmoid(eta), 1e-12, 1 - 1e-12)
    w = p_hat * (1.0 - p_hat)
    information = (X.T * w) @ X
    try:
        covariance = np.linalg.inv(information)
        se = np.sqrt(np.clip(np.diag(covariance), 0, None))
    except np.linalg.LinAlgError:
        se = np.full(k, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        z_stat = np.where(se > 0, beta / se, np.nan)
    p_values = 2.0 * norm.sf(np.abs(z_stat))
    loglik = float(np.sum(y * np.log(p_hat) + (1 - y) * np.log(1 - p_hat)))

    return GlmResult(
        names=dm.names,
        coef=beta,
        se=se,
        z=z_stat,
        p=p_values,
        stars=[significance_stars(pv) if np.isfinite(pv) else "" for pv in p_values],
        loglik=loglik,
        converged=converged,
        n_iter=iteration,
        n_obs=n,
        pruned=pruned,
        diagnostic=diagnostic,
    )


def _dialogue_index(corpus: Corpus) -> dict[str, object]:
    return {d.id: d for d in corpus.dialogues}


def strategy_counts_for_dialogue(corpus: Corpus, dialogue_id: str) -> dict[StrategyLabel, int]:
    return _count_strategies(_dialogue_index(corpus)[dialogue_id])


def _count_strategies(dialogue) -> dict[StrategyLabel, int]:
    counts = {label: 0 for label in STRATEGIES}
    for s in dialogue.sentences(Role.PERSUADER):
        if isinstance(s.label, StrategyLabel) and s.label in counts:
            counts[s.label] += 1
    return counts


def agreed_to_donate(corpus: Corpus, profile: ParticipantProfile) -> bool:
    """Did this persuadee agree to donate during the conversation?

    Uses the annotated agree-donation act when the dialogue carries persuadee
    acts; otherwise falls back to a positive promised amount.
    """
    dialogue = _dialogue_index(corpus).get(profile.dialogue_id)
    return _agreed(dialogue, profile)


def _agreed(dialogue, profile: ParticipantProfile) -> bool:
    if dialogue is not None:
        acts = [s.label for s in dialogue.sentences(Role.PERSUADEE) if s.label is not None]
        if acts:
            return PersuadeeAct.AGREE_DONATION in acts
    return (profile.donation_promised or 0.0) > 0


def _annset_persuadees(corpus: Corpus) -> list[ParticipantProfile]:
    annotated_ids = {d.id for d in corpus.annotated()}
    rows = [p for p in corpus.profiles if p.role is Role.PERSUADEE and p.dialogue_id in annotated_ids]
    return dedup_first_task(rows)


def _outcome(profile: ParticipantProfile, amount: str) -> int:
    if amount == "promised":
        return dichotomize(profile.donation_promised)
    if amount == "actual":
        return dichotomize(profile.donation_actual)
    raise ValueError(f"amount must be 'promised' or 'actual', got {amount!r}")


def _strategy_columns(
    corpus: Corpus, profiles: list[ParticipantProfile], presence: bool
) -> tuple[list[str], np.ndarray]:
    index = _dialogue_index(corpus)
    names = [label.value for label in STRATEGIES]
    matrix = np.zeros((len(profiles), len(STRATEGIES)))
    for i, profile in enumerate(profiles):
        counts = _count_strategies(index[profile.dialogue_id])
        for j, label in enumerate(STRATEGIES):
            value = counts[label]
            matrix[i, j] = float(value > 0) if presence else float(value)
    return names, matrix


def strategy_model(corpus: Corpus, presence: bool = False, amount: str = "promised") -> GlmResult:
    """Donation outcome against the ten per-dialogue strategy exposures."""
    profiles = _annset_persuadees(corpus)
    if not profiles:
        raise DegenerateGroupError("no annotated persuadee profiles")
    names, counts = _strategy_columns(corpus, profiles, presence)
    X = np.column_stack([np.ones(len(profiles)), counts])
    y = np.array([_outcome(p, amount) for p in profiles])
    return fit_logit(DesignMatrix(["intercept"] + names, X, y))


def _dummy_columns(
    profiles: list[ParticipantProfile], variable: str
) -> tuple[list[str], np.ndarray]:
    values = [getattr(p, variable).strip().lower() for p in profiles]
    levels = sorted(set(values))
    reference = REFERENCE_LEVELS.get(variable)
    if reference not in levels:
        reference = levels[0]
    rest = [level for level in levels if level != reference]
    names = [f"{variable}:{level}_vs_{reference}" for level in rest]
    matrix = np.zeros((len(profiles), len(rest)))
    for i, value in enumerate(values):
        if value != reference:
            matrix[i, rest.index(value)] = 1.0
    return names, matrix


def profile_model(corpus: Corpus, amount: str = "promised") -> GlmResult:
    """Donation outcome against demographics plus the 23 standardized traits."""
    profiles = dedup_first_task(corpus.role_profiles(Role.PERSUADEE))
    if not profiles:
        raise DegenerateGroupError("no persuadee profiles")
    names: list[str] = ["intercept", "age"]
    columns = [np.ones(len(profiles)), np.array([p.age for p in profiles])]
    for variable in DEMOGRAPHIC_CATEGORICAL:
        if variable == "religion":  # income sits between employment and religion
            names.append("income")
            columns.append(np.array([p.income for p in profiles]))
        dummy_names, dummies = _dummy_columns(profiles, variable)
        names.extend(dummy_names)
        columns.extend(dummies.T)
    for block in ("big5", "moral", "schwartz", "decision"):
        for trait in TRAIT_BLOCKS[block]:
            names.append(trait)
            columns.append(standardize([p.trait(trait) for p in profiles]))
    X = np.column_stack(columns)
    y = np.array([_outcome(p, amount) for p in profiles])
    return fit_logit(DesignMatrix(names, X, y))


def interaction_model(
    corpus: Corpus,
    trait_block: str,
    presence: bool = False,
    amount: str = "promised",
    saturated_pairs: bool = False,
) -> dict[str, GlmResult]:
    """Per-trait models with strategy-by-trait interaction terms.

    For each trait in the block, fits outcome ~ trait + 10 strategy exposures
    + 10 interactions. With ``saturated_pairs`` each (trait, strategy) pair is
    fitted alone instead (trait + one strategy + one interaction).
    """
    if trait_block not in TRAIT_BLOCKS:
        raise ValueError(f"trait_block must be one of {sorted(TRAIT_BLOCKS)}")
    profiles = _annset_persuadees(corpus)
    if not profiles:
        raise DegenerateGroupError("no annotated persuadee profiles")
    strategy_names, counts = _strategy_columns(corpus, profiles, presence)
    y = np.array([_outcome(p, amount) for p in profiles])
    ones = np.ones(len(profiles))

    results: dict[str, GlmResult] = {}
    for trait in TRAIT_BLOCKS[trait_block]:
        scores = standardize([p.trait(trait) for p in profiles])
        if saturated_pairs:
            coef, se, z, p_values, stars, names = [], [], [], [], [], []
            for j, strategy in enumerate(strategy_names):
                dm = DesignMatrix(
                    ["intercept", trait, strategy, f"{trait}*{strategy}"],
                    np.column_stack([ones, scores, counts[:, j], scores * counts[:, j]]),
                    y,
                )
                fit = fit_logit(dm)
                names.append(f"{trait}*{strategy}")
                row = fit[f"{trait}*{strategy}"]
                coef.append(row["coef"])
                se.append(row["se"])
                z.append(row["z"])
                p_values.append(row["p"])
                stars.append(row["stars"])
            results[trait] = GlmResult(
                names=names,
                coef=np.array(coef),
                se=np.array(se),
                z=np.array(z),
                p=np.array(p_values),
                stars=stars,
                loglik=float("nan"),
                converged=True,
                n_iter=0,
                n_obs=len(profiles),
            )
            continue
        names = (
            ["intercept", trait]
            + strategy_names
            + [f"{trait}*{name}" for name in strategy_names]
        )
        X = np.column_stack([ones, scores, counts, scores[:, None] * counts])
        results[trait] = fit_logit(DesignMatrix(names, X, y))
    return results


@dataclass
class InconsistencyCounts:
    n_agreed: int
    reduced: int  # donated less than promised but more than nothing
    zero: int  # promised something, donated nothing
    increased: int  # donated more than promised

    @property
    def percentages(self) -> dict[str, float]:
        total = max(self.n_agreed, 1)
        return {
            "reduced": 100.0 * self.reduced / total,
            "zero": 100.0 * self.zero / total,
            "increased": 100.0 * self.increased / total,
        }


def _agreeing_persuadees(corpus: Corpus) -> list[ParticipantProfile]:
    return [p for p in _annset_persuadees(corpus) if agreed_to_donate(corpus, p)]


def inconsistency_counts(corpus: Corpus) -> InconsistencyCounts:
    """Subgroup sizes among persuadees who agreed to donate."""
    agreed = _agreeing_persuadees(corpus)
    reduced = zero = increased = 0
    for p in agreed:
        promised = p.donation_promised or 0.0
        actual = p.donation_actual or 0.0
        if actual > promised:
            increased += 1
        elif actual < promised:
            if actual == 0.0:
                zero += 1
            else:
                reduced += 1
    return InconsistencyCounts(len(agreed), reduced, zero, increased)


def inconsistency_model(corpus: Corpus) -> GlmResult:
    """Inconsistent donation behavior (actual < promised) against Big-Five traits."""
    agreed = _agreeing_persuadees(corpus)
    if not agreed:
        raise DegenerateGroupError("no persuadees agreed to donate")
    y = np.array(
        [int((p.donation_actual or 0.0) < (p.donation_promised or 0.0)) for p in agreed]
    )
    names = ["intercept"] + list(BIG_FIVE)
    columns = [np.ones(len(agreed))] + [
        standardize([p.trait(trait) for p in agreed]) for trait in BIG_FIVE
    ]
    return fit_logit(DesignMatrix(names, np.column_stack(columns), y))
