"""Builds the bundled training corpus and held-out datasets.

Training examples pair a 50-row table with one Vega-Lite chart in the
style of CompassQL-enumerated charts (1-3 fields, six mark types,
aggregate/bin/timeUnit transforms). Held-out tables are small cleaned R
datasets. Run from the repository root.
"""
import itertools
import json
import os
import random

import numpy as np
import statsmodels.datasets as smd
from sklearn.datasets import load_iris

OUT = "crates/core/data"
rng = random.Random(7)


def records(df):
    rows = []
    for rec in df.to_dict(orient="records"):
        row = {}
        for k, v in rec.items():
            if isinstance(v, (float, np.floating)):
                v = float(v)
                if v.is_integer():
                    v = int(v)
                else:
                    v = round(v, 3)
            elif isinstance(v, (np.integer,)):
                v = int(v)
            row[k] = v
        rows.append(row)
    return rows


def take(df, n, seed):
    if len(df) <= n:
        return df
    return df.sample(n=n, random_state=seed).sort_index()


def crime():
    df = smd.statecrime.load_pandas().data.reset_index()
    df = df[["state", "violent", "murder", "poverty", "urban"]]
    return take(df, 50, 1)


def investment():
    df = smd.grunfeld.load_pandas().data
    df["year"] = df["year"].map(lambda y: "%d-01-01" % int(y))
    df = df[["firm", "year", "invest", "value", "capital"]]
    return take(df, 50, 2)


def travel():
    df = smd.modechoice.load_pandas().data
    df["mode"] = df["mode"].map({1.0: "air", 2.0: "train", 3.0: "bus", 4.0: "car"})
    df["choice"] = df["choice"].map({0.0: "no", 1.0: "yes"})
    df = df[["mode", "choice", "ttme", "invc", "gc", "hinc"]]
    return take(df, 50, 3)


def q(f, **kw):
    d = {"field": f, "type": "quantitative"}
    d.update(kw)
    return d


def n(f, **kw):
    d = {"field": f, "type": "nominal"}
    d.update(kw)
    return d


def t(f, **kw):
    d = {"field": f, "type": "temporal", "timeUnit": "year"}
    d.update(kw)
    return d


COUNT = {"aggregate": "count", "type": "quantitative"}


def spec(mark, **enc):
    return {"mark": mark, "encoding": enc}


def candidates(nom, tem, num):
    out = []
    for a in num:
        out.append(spec("bar", x=q(a, bin=True), y=COUNT))
        out.append(spec("tick", x=q(a)))
        out.append(spec("area", x=q(a, bin=True), y=COUNT))
        out.append(spec("line", x=q(a, bin=True), y=COUNT))
    for s in nom:
        out.append(spec("bar", y=n(s), x=COUNT))
        out.append(spec("point", y=n(s), x=COUNT))
    for a, b in itertools.permutations(num, 2):
        out.append(spec("point", x=q(a), y=q(b)))
        out.append(spec("circle", x=q(a), y=q(b)))
    for s, a in itertools.product(nom, num):
        out.append(spec("bar", y=n(s), x=q(a, aggregate="mean")))
        out.append(spec("bar", x=n(s), y=q(a, aggregate="sum")))
        out.append(spec("tick", x=q(a), y=n(s)))
        out.append(spec("point", x=q(a), y=n(s)))
    for s, (a, b) in itertools.product(nom, itertools.permutations(num, 2)):
        out.append(spec("point", x=q(a), y=q(b), color=n(s)))
        out.append(spec("circle", x=q(a), y=q(b), color=n(s)))
    for a, b, c in itertools.permutations(num, 3):
        out.append(spec("point", x=q(a), y=q(b), size=q(c)))
    for d, a in itertools.product(tem, num):
        out.append(spec("line", x=t(d), y=q(a, aggregate="mean")))
        out.append(spec("area", x=t(d), y=q(a, aggregate="sum")))
        out.append(spec("bar", x=t(d), y=q(a, aggregate="sum")))
    for d, a, s in itertools.product(tem, num, nom):
        out.append(spec("line", x=t(d), y=q(a, aggregate="mean"), color=n(s)))
    return out


def pick(cands, k, seed):
    r = random.Random(seed)
    # keep every mark represented before filling randomly
    by_mark = {}
    for c in cands:
        by_mark.setdefault(c["mark"], []).append(c)
    chosen = []
    for mark in sorted(by_mark):
        chosen.append(r.choice(by_mark[mark]))
    rest = [c for c in cands if c not in chosen]
    r.shuffle(rest)
    chosen.extend(rest[: k - len(chosen)])
    return chosen


def write_corpus():
    sets = [
        ("crime", crime(), ["state"], [], ["violent", "murder", "poverty", "urban"]),
        ("investment", investment(), ["firm"], ["year"], ["invest", "value", "capital"]),
        ("travel", travel(), ["mode", "choice"], [], ["ttme", "invc", "gc", "hinc"]),
    ]
    for idx, (name, df, nom, tem, num) in enumerate(sets):
        data = records(df)
        specs = pick(candidates(nom, tem, num), 40, 100 + idx)
        for i, s in enumerate(specs):
            path = os.path.join(OUT, "corpus", "%s_%02d.json" % (name, i))
            with open(path, "w") as fh:
                json.dump({"data": data, "spec": s}, fh, separators=(",", ":"))
                fh.write("\n")


def rdatasets():
    iris = load_iris(as_frame=True)
    df = iris.frame.rename(
        columns={
            "sepal length (cm)": "Sepal.Length",
            "sepal width (cm)": "Sepal.Width",
            "petal length (cm)": "Petal.Length",
            "petal width (cm)": "Petal.Width",
        }
    )
    df["Species"] = df["target"].map(dict(enumerate(iris.target_names)))
    yield "iris", df.drop(columns=["target"])

    sl = smd.stackloss.load_pandas().data
    sl = sl.rename(
        columns={"AIRFLOW": "Air.Flow", "WATERTEMP": "Water.Temp", "ACIDCONC": "Acid.Conc.", "STACKLOSS": "stack.loss"}
    )[["Air.Flow", "Water.Temp", "Acid.Conc.", "stack.loss"]]
    yield "stackloss", sl

    lo = smd.longley.load_pandas().data
    import pandas as pd

    yield "longley", pd.DataFrame(
        {
            "GNP.deflator": lo["GNPDEFL"],
            "GNP": lo["GNP"] / 1000.0,
            "Unemployed": lo["UNEMP"] / 10.0,
            "Armed.Forces": lo["ARMED"] / 10.0,
            "Population": lo["POP"] / 1000.0,
            "Year": lo["YEAR"],
            "Employed": lo["TOTEMP"] / 1000.0,
        }
    )

    yield "women", pd.DataFrame(
        {
            "height": list(range(58, 73)),
            "weight": [115, 117, 120, 123, 126, 129, 132, 135, 139, 142, 146, 150, 154, 159, 164],
        }
    )

    weights = [
        4.17, 5.58, 5.18, 6.11, 4.50, 4.61, 5.17, 4.53, 5.33, 5.14,
        4.81, 4.17, 4.41, 3.59, 5.87, 3.83, 6.03, 4.89, 4.32, 4.69,
        6.31, 5.12, 5.54, 5.50, 5.37, 5.29, 4.92, 6.15, 5.80, 5.26,
    ]
    yield "PlantGrowth", pd.DataFrame(
        {"weight": weights, "group": ["ctrl"] * 10 + ["trt1"] * 10 + ["trt2"] * 10}
    )

    speed = [4, 4, 7, 7, 8, 9, 10, 10, 10, 11, 11, 12, 12, 12, 12, 13, 13, 13, 13, 14, 14, 14, 14, 15, 15,
             15, 16, 16, 17, 17, 17, 18, 18, 18, 18, 19, 19, 19, 20, 20, 20, 20, 20, 22, 23, 24, 24, 24, 24, 25]
    dist = [2, 10, 4, 22, 16, 10, 18, 26, 34, 17, 28, 14, 20, 24, 28, 26, 34, 34, 46, 26, 36, 60, 80, 20, 26,
            54, 32, 40, 32, 40, 50, 42, 56, 76, 84, 36, 46, 68, 32, 48, 52, 56, 64, 66, 54, 70, 92, 93, 120, 85]
    yield "cars", pd.DataFrame({"speed": speed, "dist": dist})

    extra = [0.7, -1.6, -0.2, -1.2, -0.1, 3.4, 3.7, 0.8, 0.0, 2.0, 1.9, 0.8, 1.1, 0.1, -0.1, 4.4, 5.5, 1.6, 4.6, 3.4]
    yield "sleep", pd.DataFrame(
        {"extra": extra, "group": ["1"] * 10 + ["2"] * 10, "ID": [str(i) for i in range(1, 11)] * 2}
    )

    nile = smd.nile.load_pandas().data
    yield "Nile", pd.DataFrame({"time": nile["year"], "value": nile["volume"]})

    ss = smd.sunspots.load_pandas().data
    yield "sunspot.year", pd.DataFrame({"time": ss["YEAR"], "value": ss["SUNACTIVITY"]})

    en = smd.engel.load_pandas().data
    yield "engel", en[["income", "foodexp"]]


def write_rdatasets():
    for name, df in rdatasets():
        with open(os.path.join(OUT, "rdatasets", name + ".json"), "w") as fh:
            json.dump(records(df), fh, separators=(",", ":"))
            fh.write("\n")


if __name__ == "__main__":
    write_corpus()
    write_rdatasets()
