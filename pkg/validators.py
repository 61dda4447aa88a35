import pandera.pandas as pa

# Contracts for the frames written to the warehouse and the report CSVs.
# A row that violates them (ex. an accuracy above 1) rejects the whole run.
EpisodeResultSchema = pa.DataFrameSchema(
    {
        "run_id": pa.Column(str),
        "ablation": pa.Column(str),
        "episode_idx": pa.Column(int, checks=pa.Check.ge(0), unique=True),
        # sha256 hex digest of the episode's class and sample indices
        "episode_hash": pa.Column(str, checks=pa.Check.str_matches(r"^[0-9a-f]{64}$")),
        "accuracy": pa.Column(float, checks=pa.Check.in_range(0.0, 1.0)),
        # Empty when label propagation is switched off
        "accuracy_lp": pa.Column(float, checks=pa.Check.in_range(0.0, 1.0), nullable=True),
        # Empty unless the episode carries an extra query set
        "extra_accuracy": pa.Column(float, checks=pa.Check.in_range(0.0, 1.0), nullable=True),
        "max_shift": pa.Column(float, checks=pa.Check.ge(0.0), nullable=True),
    },
    strict=True,
    ordered=True,
)

ComparisonSchema = pa.DataFrameSchema(
    {
        "label": pa.Column(str, unique=True),
        "ablation": pa.Column(str),
        "episodes": pa.Column(int, checks=pa.Check.ge(1)),
        "mean": pa.Column(float, checks=pa.Check.in_range(0.0, 1.0)),
        "ci95": pa.Column(float, checks=pa.Check.ge(0.0)),
        "mean_lp": pa.Column(float, checks=pa.Check.in_range(0.0, 1.0), nullable=True),
        "ci95_lp": pa.Column(float, checks=pa.Check.ge(0.0), nullable=True),
    },
    strict=True,
)
