from evigraph.data import DatasetTable


def make_table(columns, trials=None, name=""):
    """columns: {name: (kind, values)} in declaration order."""
    return DatasetTable(
        columns=tuple(columns),
        kinds={c: k for c, (k, _) in columns.items()},
        data={c: list(v) for c, (_, v) in columns.items()},
        trials=trials or {},
        name=name,
    )
