#!/usr/bin/env python3
"""Generates the scripted benchmark data under crates/core/data.

Outputs: corpus.json, stress.json, reference_results.json, demos.json,
scenarios/**.json (scripted model replies) and fixtures/ (tool replies).
The script is deterministic; rerunning it reproduces the files byte for byte.
"""

from __future__ import annotations

import json
import re
import shutil
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "crates" / "core" / "data"
PATTERNS = json.loads((DATA / "patterns.json").read_text())
REGISTRY = json.loads((DATA / "registry.json").read_text())
CLASS = {a["id"]: a.get("data_class") for a in REGISTRY["agents"] if a.get("kind") == "specialist"}
IMAGES = {a["id"] for a in REGISTRY["agents"] if a.get("produces_images")}
CLASS_ORDER = {"observation": 0, "hypothetical": 1, "forecast": 2}
FT = 0.3048

# ---------------------------------------------------------------------------
# Reference facts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Storm:
    key: str
    name: str
    year: int
    sid: str
    lf_time: str
    lf_place: str
    lf_kt: int
    lf_mb: int
    lf_cat: int
    pk_time: str
    pk_kt: int
    pk_mb: int
    pk_cat: int
    window: tuple[str, str]
    stn_event: int

    @property
    def lf_date(self) -> str:
        return human_date(self.lf_time)

    @property
    def tcr_url(self) -> str:
        return f"https://www.nhc.noaa.gov/data/tcr/{self.sid}_{self.name}.pdf"


STORMS = {
    s.key: s
    for s in [
        Storm("ike", "Ike", 2008, "AL092008", "2008-09-13 07:00 UTC", "Galveston Island, Texas", 95, 950, 2,
              "2008-09-04 00:00 UTC", 125, 935, 4, ("20080911", "20080915"), 24),
        Storm("sandy", "Sandy", 2012, "AL182012", "2012-10-29 23:30 UTC", "Brigantine, New Jersey", 70, 945, 1,
              "2012-10-25 05:25 UTC", 100, 954, 3, ("20121028", "20121031"), 135),
        Storm("katrina", "Katrina", 2005, "AL122005", "2005-08-29 11:10 UTC", "Buras, Louisiana", 110, 920, 3,
              "2005-08-28 18:00 UTC", 150, 902, 5, ("20050827", "20050831"), 9),
        Storm("harvey", "Harvey", 2017, "AL092017", "2017-08-26 03:00 UTC", "San Jose Island, Texas", 115, 937, 4,
              "2017-08-26 00:00 UTC", 115, 937, 4, ("20170824", "20170901"), 180),
        Storm("michael", "Michael", 2018, "AL142018", "2018-10-10 17:30 UTC", "Mexico Beach, Florida", 140, 919, 5,
              "2018-10-10 17:30 UTC", 140, 919, 5, ("20181009", "20181012"), 287),
        Storm("irma", "Irma", 2017, "AL112017", "2017-09-10 13:10 UTC", "Cudjoe Key, Florida", 115, 931, 4,
              "2017-09-06 06:00 UTC", 155, 914, 5, ("20170909", "20170912"), 182),
        Storm("ian", "Ian", 2022, "AL092022", "2022-09-28 19:05 UTC", "Cayo Costa, Florida", 130, 940, 4,
              "2022-09-28 12:00 UTC", 140, 937, 5, ("20220928", "20221004"), 312),
        Storm("isabel", "Isabel", 2003, "AL132003", "2003-09-18 17:00 UTC", "Drum Inlet, North Carolina", 90, 957, 2,
              "2003-09-11 18:00 UTC", 145, 915, 5, ("20030917", "20030920"), 4),
        Storm("ivan", "Ivan", 2004, "AL092004", "2004-09-16 06:50 UTC", "Gulf Shores, Alabama", 105, 946, 3,
              "2004-09-11 18:00 UTC", 145, 910, 5, ("20040914", "20040918"), 6),
        Storm("helene", "Helene", 2024, "AL092024", "2024-09-27 03:10 UTC", "Perry, Florida", 120, 938, 4,
              "2024-09-27 00:00 UTC", 120, 938, 4, ("20240925", "20240928"), 338),
    ]
}


@dataclass(frozen=True)
class Station:
    sid: str
    name: str
    search: str
    lat: float
    lon: float


STATIONS = {
    s.sid: s
    for s in [
        Station("8771450", "Galveston Pier 21, TX", "Galveston", 29.3100, -94.7933),
        Station("8518750", "The Battery, NY", "The Battery", 40.7006, -74.0142),
        Station("8761724", "Grand Isle, LA", "Grand Isle", 29.2633, -89.9567),
        Station("8724580", "Key West, FL", "Key West", 24.5511, -81.8081),
        Station("8770570", "Sabine Pass North, TX", "Sabine Pass", 29.7284, -93.8701),
        Station("8735180", "Dauphin Island, AL", "Dauphin Island", 30.2500, -88.0750),
        Station("8723214", "Virginia Key, FL", "Virginia Key", 25.7314, -80.1618),
        Station("8638610", "Sewells Point, VA", "Sewells Point", 36.9467, -76.3300),
        Station("8725520", "Fort Myers, FL", "Fort Myers", 26.6477, -81.8712),
        Station("8725110", "Naples, FL", "Naples", 26.1317, -81.8075),
        Station("8729840", "Pensacola, FL", "Pensacola", 30.4044, -87.2112),
        Station("8516945", "Kings Point, NY", "Kings Point", 40.8103, -73.7649),
        Station("9414290", "San Francisco, CA", "San Francisco", 37.8063, -122.4659),
        Station("9447130", "Seattle, WA", "Seattle", 47.6026, -122.3393),
        Station("8762075", "Port Fourchon, LA", "Port Fourchon", 29.1142, -90.1993),
        Station("8761305", "Shell Beach, LA", "Shell Beach", 29.8681, -89.6733),
    ]
}


@dataclass(frozen=True)
class Place:
    key: str
    name: str
    lat: float
    lon: float
    zones: tuple[str, ...]
    bfe_ft: tuple[int, ...]
    panel: str


PLACES = {
    p.key: p
    for p in [
        Place("miami_beach", "Miami Beach, Florida", 25.7907, -80.1300, ("AE", "VE"), (8, 10), "12086C0326L"),
        Place("tampa", "Tampa, Florida", 27.9506, -82.4572, ("AE",), (9,), "12057C0354J"),
        Place("galveston", "Galveston, Texas", 29.3013, -94.7977, ("VE", "AE"), (14, 12), "48167C0276G"),
        Place("charleston", "Charleston, South Carolina", 32.7765, -79.9311, ("AE", "VE"), (11, 13), "45019C0516K"),
        Place("corpus", "Corpus Christi, Texas", 27.8006, -97.3964, ("AE", "VE"), (10, 13), "48355C0520G"),
        Place("omaha", "Omaha, Nebraska", 41.2565, -95.9345, ("AE",), (973,), "31055C0190H"),
        Place("miami", "Miami, Florida", 25.7617, -80.1918, ("VE", "AE"), (9, 15), "12086C0314L"),
    ]
}

SEASONS = {
    2005: dict(named=28, hurricanes=15, major=7),
    2011: dict(named=20, hurricanes=7, major=4),
    2017: dict(named=17, hurricanes=10, major=6),
    2020: dict(named=30, hurricanes=14, major=7),
}

MONTHS = ["January", "February", "March", "April", "May", "June", "July", "August", "September",
          "October", "November", "December"]


def human_date(stamp: str) -> str:
    y, m, d = stamp[:10].split("-")
    return f"{int(d)} {MONTHS[int(m) - 1]} {y}"


def hhmm(stamp: str) -> str:
    return stamp[11:16] + " UTC"


# ---------------------------------------------------------------------------
# Sub-questions
# ---------------------------------------------------------------------------


@dataclass
class Surge:
    """Surge at a gauge; `hwm` asks for high-water marks too."""

    storm: str
    station: str
    truth_m: float
    answer_m: float
    water_level_m: float
    peak_time: str
    county: str
    state: str
    hwm_n: int
    hwm_lo_ft: float
    hwm_hi_ft: float
    hwm: bool = False
    band: tuple[float, float | None] | None = None
    gauge_truth_m: float | None = None
    cite_time: bool = True
    cite_station: bool = True
    cons_m: float | None = None
    nocons_m: float | None = None
    merge_surge: bool = True
    gap: bool = False
    hwm_answer: str | None = None
    omit_nhc: bool = False
    kind: str = "surge"

    @property
    def s(self) -> Storm:
        return STORMS[self.storm]

    @property
    def st(self) -> Station:
        return STATIONS[self.station]


@dataclass
class CategoryQ:
    storm: str
    peak: bool = False
    kind: str = "category"

    @property
    def s(self) -> Storm:
        return STORMS[self.storm]

    @property
    def cat(self) -> int:
        return self.s.pk_cat if self.peak else self.s.lf_cat


@dataclass
class CountQ:
    year: int
    what: str  # "named storms" | "hurricanes"
    kind: str = "count"

    @property
    def value(self) -> int:
        return SEASONS[self.year]["named" if self.what == "named storms" else "hurricanes"]


@dataclass
class ZoneQ:
    place: str
    kind: str = "zone"

    @property
    def p(self) -> Place:
        return PLACES[self.place]


@dataclass
class StationNow:
    station: str
    kind: str = "station"


# ---------------------------------------------------------------------------
# Fixtures
# ---------------------------------------------------------------------------

FIXTURES: dict[tuple[str, str], dict] = {}
SHARED = {"noaa_compute_surge"}


def canonical(v) -> str:
    return json.dumps(v, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def fixture(tool: str, args: dict, body=None, image_file: str | None = None) -> dict:
    key = (tool, canonical(args))
    result = {}
    if body is not None:
        result["body"] = body
    if image_file is not None:
        result["image_file"] = image_file
    prior = FIXTURES.get(key)
    if prior is not None and tool in SHARED:
        # One gauge record per station and window; later queries replay it.
        return prior["result"].get("body")
    if prior is not None and prior["result"] != result:
        raise SystemExit(f"conflicting fixture for {tool} {args}")
    FIXTURES[key] = {"tool": tool, "args": args, "result": result}
    return body if body is not None else {"image": image_file}


def storm_search(s: Storm) -> tuple[str, dict, dict]:
    args = {"name": s.name, "year": s.year}
    body = {
        "storms": [{"storm_id": s.sid, "name": s.name.upper(), "year": s.year, "basin": "AL",
                    "max_wind_kt": s.pk_kt, "min_pressure_mb": s.pk_mb}],
        "source": "NHC HURDAT2 Atlantic best track",
        "url": f"https://www.nhc.noaa.gov/data/hurdat/hurdat2-atl-{s.year}.txt",
    }
    return "nhc_search_storms", args, fixture("nhc_search_storms", args, body)


def best_track(s: Storm) -> tuple[str, dict, dict]:
    args = {"storm_id": s.sid}
    body = {
        "storm_id": s.sid,
        "name": s.name.upper(),
        "landfall": {"time": s.lf_time, "location": s.lf_place, "wind_kt": s.lf_kt, "pressure_mb": s.lf_mb,
                     "saffir_simpson": s.lf_cat},
        "peak": {"time": s.pk_time, "wind_kt": s.pk_kt, "pressure_mb": s.pk_mb, "saffir_simpson": s.pk_cat},
        "source": f"NHC Tropical Cyclone Report {s.sid}",
        "url": s.tcr_url,
    }
    return "nhc_get_best_track", args, fixture("nhc_get_best_track", args, body)


def season(year: int) -> tuple[str, dict, dict]:
    args = {"year": year}
    d = SEASONS[year]
    body = {"year": year, "basin": "AL", "named_storms": d["named"], "hurricanes": d["hurricanes"],
            "major_hurricanes": d["major"], "source": "NHC Atlantic basin storm totals (HURDAT2)",
            "url": "https://www.nhc.noaa.gov/climo/"}
    return "nhc_get_season_summary", args, fixture("nhc_get_season_summary", args, body)


def station_search(st: Station) -> tuple[str, dict, dict]:
    args = {"query": st.search}
    body = {"stations": [{"id": st.sid, "name": st.name, "lat": st.lat, "lon": st.lon, "type": "water_level"}],
            "url": f"https://tidesandcurrents.noaa.gov/stationhome.html?id={st.sid}"}
    return "noaa_search_stations", args, fixture("noaa_search_stations", args, body)


def surge_calc(q: Surge, station: Station | None = None, value: float | None = None,
               gap: dict | None = None) -> tuple[str, dict, dict]:
    st = station or q.st
    b, e = q.s.window
    args = {"station": st.sid, "begin_date": b, "end_date": e, "datum": "MHHW"}
    body = {
        "station": st.sid, "name": st.name, "datum": "MHHW", "units": "meters",
        "window": {"begin": f"{b[:4]}-{b[4:6]}-{b[6:]} 00:00 UTC", "end": f"{e[:4]}-{e[4:6]}-{e[6:]} 00:00 UTC"},
        "peak_surge_m": round(value if value is not None else q.answer_m, 2),
        "peak_surge_time": q.peak_time,
        "peak_water_level_m": round(q.water_level_m if station is None else q.water_level_m * 0.8, 2),
        "method": "observed minus predicted (6-minute verified data)",
        "url": f"https://tidesandcurrents.noaa.gov/waterlevels.html?id={st.sid}",
    }
    if gap:
        body["data_gap"] = gap
    return "noaa_compute_surge", args, fixture("noaa_compute_surge", args, body)


def stn_event(s: Storm) -> tuple[str, dict, dict]:
    args = {"storm": s.name, "year": s.year}
    body = {"event_id": s.stn_event, "event_name": f"{s.year} {s.name}",
            "url": f"https://stn.wim.usgs.gov/STNServices/Events/{s.stn_event}.json"}
    return "usgs_stn_resolve_storm_event", args, fixture("usgs_stn_resolve_storm_event", args, body)


def stn_hwms(q: Surge) -> tuple[str, dict, dict]:
    s = q.s
    args = {"event_id": s.stn_event, "state": q.state, "county": q.county}
    lo, hi = q.hwm_lo_ft, q.hwm_hi_ft
    mean = round((lo + hi) / 2 - 0.4, 1)
    sample = [
        {"hwm_id": 10000 + s.stn_event * 10 + i, "elev_ft": v, "vertical_datum": "NAVD88",
         "hwm_environment": "Coastal", "quality": ["Excellent", "Good", "Fair"][i % 3]}
        for i, v in enumerate([hi, round((lo + hi) / 2, 1), lo])
    ]
    body = {"event_id": s.stn_event, "state": q.state, "county": q.county, "count": q.hwm_n, "hwms": sample,
            "summary": {"min_ft": lo, "max_ft": hi, "mean_ft": mean, "vertical_datum": "NAVD88"},
            "url": f"https://stn.wim.usgs.gov/STNServices/HWMs/FilteredHWMs.json?Event={s.stn_event}"
                   f"&States={q.state}&County={q.county.replace(' ', '%20')}"}
    return "usgs_stn_get_hwms", args, fixture("usgs_stn_get_hwms", args, body)


def geocode(p: Place) -> tuple[str, dict, dict]:
    args = {"place": p.name}
    body = {"place": p.name, "lat": p.lat, "lon": p.lon, "source": "FEMA geocoder"}
    return "fema_geocode", args, fixture("fema_geocode", args, body)


def nfhl(p: Place) -> tuple[str, dict, dict]:
    args = {"lat": p.lat, "lon": p.lon}
    feats = [{"FLD_ZONE": z, "STATIC_BFE": b, "V_DATUM": "NAVD88", "SFHA_TF": "T", "FIRM_PAN": p.panel}
             for z, b in zip(p.zones, p.bfe_ft)]
    if p.key == "omaha":
        feats.append({"FLD_ZONE": "X", "STATIC_BFE": None, "V_DATUM": None, "SFHA_TF": "F", "FIRM_PAN": p.panel})
    body = {"features": feats, "layer": "S_FLD_HAZ_AR",
            "url": "https://hazards.fema.gov/arcgis/rest/services/public/NFHL/MapServer/28"}
    return "fema_nfhl_point_query", args, fixture("fema_nfhl_point_query", args, body)


# ---------------------------------------------------------------------------
# Plans: features, rewrite and compiled node ids (mirrors the Rust rules)
# ---------------------------------------------------------------------------


def features(query: str) -> dict:
    hit = lambda k: any(re.search(p, query) for p in PATTERNS[k])
    return {"named": hit("named_storm"), "surge": hit("surge"), "scoped": hit("gauge_scoped")}


def rewrite(plan: dict, f: dict) -> dict:
    tracks = []
    for tr in plan["tracks"]:
        layers = [list(l) for l in tr["layers"]]
        if f["named"]:
            first = next((i for i, l in enumerate(layers)
                          if any(a != "nhc" and CLASS[a] == "observation" for a in l)), None)
            if first is not None and not any("nhc" in l for l in layers[:first]):
                if "nhc" in layers[first]:
                    layers[first].remove("nhc")
                else:
                    later = next((i for i, l in enumerate(layers) if "nhc" in l), None)
                    if later is not None:
                        layers[later].remove("nhc")
                        if not layers[later]:
                            layers.pop(later)
                layers.insert(first, ["nhc"])
        split = []
        for l in layers:
            classes = sorted({CLASS[a] for a in l}, key=CLASS_ORDER.get)
            if len(classes) <= 1:
                split.append(l)
            else:
                split.extend([a for a in l if CLASS[a] == c] for c in classes)
        layers = split
        if f["surge"]:
            gl = next((i for i, l in enumerate(layers) if "noaa_coops" in l), None)
            if gl is not None and not any("usgs" in l for l in layers) and not f["scoped"]:
                layers[gl].append("usgs")
        sl = next((i for i, l in enumerate(layers) if "stofs" in l), None)
        if sl is not None and not any("osm" in l for l in layers):
            layers[sl].append("osm")
        tracks.append({"goal": tr["goal"], "layers": layers})
    return {"topology": plan["topology"], "tracks": tracks}


@dataclass
class Compiled:
    tracks: list  # per track: list of (kind, [node ids], layer agents)
    merge: str | None
    reporter: str


def compile_ids(plan: dict) -> Compiled:
    tracks = []
    for t, tr in enumerate(plan["tracks"]):
        stages = []
        for layer in tr["layers"]:
            s = len(stages)
            stages.append(("spec", [f"t{t}.l{s}.{a}" for a in layer], layer))
            if any(a in IMAGES for a in layer):
                s = len(stages)
                stages.append(("image", [f"t{t}.l{s}.image"], layer))
            if len(layer) >= 2:
                s = len(stages)
                stages.append(("cons", [f"t{t}.l{s}.consolidator"], layer))
        tracks.append(stages)
    depth = max(len(s) for s in tracks)
    merge = f"t*.l{depth}.cross_track_merge" if len(tracks) >= 2 else None
    reporter = f"t*.l{depth + 1 if merge else depth}.reporter"
    return Compiled(tracks, merge, reporter)


STATIC_PLAN = {"topology": "linear", "tracks": [{"goal": "", "layers": [["nhc"], ["noaa_coops", "usgs"], ["fema"]]}]}

# ---------------------------------------------------------------------------
# Scripts
# ---------------------------------------------------------------------------


@dataclass
class Exchange:
    stage: str
    node: str
    ordinal: int | None
    content: str
    calls: list = field(default_factory=list)  # (tool, args, body)
    pattern: str | None = None
    counted: bool = True  # consumed on the reference (full) run
    history: int = 0  # chars of tool output already in the transcript
    inputs: int = 0  # chars of upstream material in the prompt
    usage: tuple[int, int] | None = None


class Script:
    def __init__(self, name: str, query: str, multimodal: bool = False):
        self.name = name
        self.query = query
        self.multimodal = multimodal
        self.ex: list[Exchange] = []

    def add(self, e: Exchange) -> Exchange:
        self.ex.append(e)
        return e

    def heuristic_usage(self, e: Exchange) -> tuple[int, int]:
        if e.stage == "architect":
            return 2600 + 6 * len(self.query) + e.inputs, 60 + len(e.content) // 3
        if e.stage == "specialist":
            inp = 1900 + 420 * (e.ordinal or 0) + e.history // 3
            out = 45 + 30 * len(e.calls) if e.calls else 40 + len(e.content) // 3
            return inp, out
        return 650 + e.inputs // 3, 40 + len(e.content) // 3

    def finish(self, budget: dict | None = None):
        for e in self.ex:
            e.usage = self.heuristic_usage(e)
        if budget:
            for stage, (tin, tout) in budget.items():
                group = [e for e in self.ex if e.stage == stage and e.counted]
                if not group:
                    if tin or tout:
                        raise SystemExit(f"{self.name}: no {stage} exchanges for budget")
                    continue
                ins = allocate(tin, [e.usage[0] for e in group])
                outs = allocate(tout, [e.usage[1] for e in group])
                for e, i, o in zip(group, ins, outs):
                    e.usage = (i, o)

    def to_json(self) -> dict:
        out = []
        for e in self.ex:
            m = {"stage": e.stage, "node": e.node}
            if e.ordinal is not None:
                m["ordinal"] = e.ordinal
            if e.pattern is not None:
                m["pattern"] = e.pattern
            respond = {"content": e.content,
                       "usage": {"input_tokens": e.usage[0], "output_tokens": e.usage[1]}}
            if e.calls:
                respond["tool_calls"] = [{"name": t, "arguments": a} for t, a, _ in e.calls]
            out.append({"match": m, "respond": respond})
        doc = {"name": self.name}
        if self.multimodal:
            doc["multimodal"] = True
        doc["exchanges"] = out
        return doc


def allocate(total: int, weights: list[int]) -> list[int]:
    """Largest-remainder split of `total` in proportion to `weights`."""
    w = sum(weights)
    exact = [total * x / w for x in weights]
    base = [int(v) for v in exact]
    rest = total - sum(base)
    order = sorted(range(len(weights)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:rest]:
        base[i] += 1
    return base


def specialist(script: Script, node: str, rounds: list[list[tuple]], brief: str,
               guards: list[tuple[str, str]] = ()) -> None:
    """Scripts one specialist: a tool round per entry of `rounds`, then the brief.
    `guards` are (pattern, brief) replies used on the second request instead."""
    for pattern, text in guards:
        script.add(Exchange("specialist", node, 1, text, pattern=pattern, counted=False, history=300))
    history = 0
    for k, calls in enumerate(rounds):
        script.add(Exchange("specialist", node, k, "", calls=list(calls), history=history))
        history += sum(len(canonical(b)) for _, _, b in calls)
    script.add(Exchange("specialist", node, len(rounds), brief, history=history))


# ---------------------------------------------------------------------------
# Text for each sub-question kind
# ---------------------------------------------------------------------------


def ft_of(m: float) -> float:
    return m / FT


def nhc_track_brief(s: Storm, place: str) -> str:
    return (f"NHC best track {s.sid} ({s.name} {s.year}, HURDAT2): landfall {s.lf_time} near {s.lf_place} "
            f"with {s.lf_kt} kt maximum sustained wind and {s.lf_mb} mb minimum pressure "
            f"(Category {s.lf_cat}). The track and wind field are relevant to {place}. "
            f"Source: NHC Tropical Cyclone Report {s.sid}, {s.tcr_url}")


def category_brief(q: CategoryQ) -> str:
    s = q.s
    if q.peak:
        return (f"NHC best track {s.sid} ({s.name} {s.year}, HURDAT2): lifetime peak intensity {s.pk_kt} kt and "
                f"{s.pk_mb} mb at {s.pk_time}, Category {s.pk_cat} on the Saffir-Simpson scale. Landfall "
                f"{s.lf_time} near {s.lf_place} at {s.lf_kt} kt. Source: NHC Tropical Cyclone Report {s.sid}, "
                f"{s.tcr_url}")
    return (f"NHC best track {s.sid} ({s.name} {s.year}, HURDAT2): landfall {s.lf_time} near {s.lf_place}, "
            f"maximum sustained wind {s.lf_kt} kt, minimum pressure {s.lf_mb} mb, Category {s.lf_cat} on the "
            f"Saffir-Simpson scale. Lifetime peak {s.pk_kt} kt at {s.pk_time}. Source: NHC Tropical Cyclone "
            f"Report {s.sid}, {s.tcr_url}")


def category_answer(q: CategoryQ) -> str:
    s = q.s
    mph = round(s.lf_kt * 1.15078 / 5) * 5
    if q.peak:
        return (f"Hurricane {s.name} reached its peak intensity as a Category {s.pk_cat} hurricane with maximum "
                f"sustained winds of {s.pk_kt} kt and a minimum pressure of {s.pk_mb} mb on {human_date(s.pk_time)}, "
                f"according to the NHC Tropical Cyclone Report ({s.sid}).")
    return (f"Hurricane {s.name} made landfall near {s.lf_place} on {s.lf_date} as a Category {s.lf_cat} "
            f"hurricane, with maximum sustained winds of {s.lf_kt} kt (about {mph} mph) and a minimum pressure of "
            f"{s.lf_mb} mb, according to the NHC Tropical Cyclone Report ({s.sid}).")


def category_summary(q: CategoryQ) -> str:
    s = q.s
    if q.peak:
        return f"{s.name} ({s.sid}) peaked at {s.pk_kt} kt, Category {s.pk_cat}, per the NHC best track."
    return f"{s.name} ({s.sid}) made landfall near {s.lf_place} at {s.lf_kt} kt, Category {s.lf_cat}, per the NHC best track."


def count_brief(q: CountQ) -> str:
    d = SEASONS[q.year]
    return (f"HURDAT2 season summary {q.year} (Atlantic basin): {d['named']} named storms, {d['hurricanes']} "
            f"hurricanes, {d['major']} major hurricanes. Source: NHC Atlantic basin storm totals, "
            f"https://www.nhc.noaa.gov/climo/")


def count_answer(q: CountQ) -> str:
    return (f"The {q.year} Atlantic hurricane season had {q.value} {q.what}, according to the NHC HURDAT2 "
            f"Atlantic basin storm totals.")


def count_summary(q: CountQ) -> str:
    return f"The {q.year} Atlantic season had {q.value} {q.what} (NHC HURDAT2 storm totals)."


def zone_brief(q: ZoneQ) -> str:
    p = q.p
    zl = " and ".join(p.zones)
    bfe = ", ".join(f"{z} {b} ft NAVD88" for z, b in zip(p.zones, p.bfe_ft))
    extra = ""
    if p.key == "omaha":
        extra = " Unshaded zone X covers the rest of the buffer. The AE area follows the Missouri River floodplain; no coastal VE zones exist."
    return (f"FEMA NFHL point query at {p.lat:.4f}, {p.lon:.4f} ({p.name}): flood zones {zl} within the search "
            f"buffer, all in the special flood hazard area. Base flood elevations: {bfe}. FIRM panel {p.panel}.{extra} "
            f"Source: FEMA National Flood Hazard Layer MapServer, "
            f"https://hazards.fema.gov/arcgis/rest/services/public/NFHL/MapServer/28")


def zone_list(zones) -> str:
    zones = list(zones)
    return zones[0] if len(zones) == 1 else ", ".join(zones[:-1]) + " and " + zones[-1]


def zone_answer(q: ZoneQ, zones=None) -> str:
    p = q.p
    zones = list(zones or p.zones)
    meaning = {"AE": "AE (special flood hazard area with a base flood elevation)",
               "VE": "VE (coastal high-hazard area with wave action)"}
    parts = zone_list(meaning.get(z, z) for z in zones)
    noun = "zone" if len(zones) == 1 else "zones"
    return (f"FEMA's National Flood Hazard Layer maps {p.name.split(',')[0]} in flood {noun} {parts}. These are "
            f"regulatory designations for the 1-percent-annual-chance flood, not predictions for a specific storm.")


def zone_summary(q: ZoneQ) -> str:
    p = q.p
    noun = "zone" if len(p.zones) == 1 else "zones"
    return f"{p.name.split(',')[0]}: FEMA NFHL flood {noun} {zone_list(p.zones)} (special flood hazard area)."


def noaa_surge_rounds(q: Surge) -> tuple[list, str]:
    st, s = q.st, q.s
    if q.gap:
        gap = {"start": "2005-08-29 08:00 UTC", "end": "2005-09-03 00:00 UTC", "reason": "sensor destroyed"}
        alt = STATIONS["8762075"]
        shell = STATIONS["8761305"]
        rounds = [
            [station_search(st)],
            [surge_calc(q, value=1.87, gap=gap)],
            [nearest(st, [alt, shell])],
            [surge_calc(q, station=alt, value=1.62, gap={"start": "2005-08-29 06:18 UTC",
                                                          "end": "2005-09-02 00:00 UTC",
                                                          "reason": "station offline"})],
            [surge_calc(q, station=shell, value=round(q.answer_m + 0.31, 2))],
        ]
        brief = (f"CO-OPS {st.sid} {st.name}: gauge stopped reporting at 08:00 UTC on 29 August 2005 (sensor "
                 f"destroyed) before the storm peak; last valid surge (observed minus predicted) 1.87 m, still rising. "
                 f"Datum MHHW. Nearby gauges: {alt.sid} {alt.name} offline from 06:18 UTC (last surge 1.62 m); "
                 f"{shell.sid} {shell.name} recorded a peak surge of {q.answer_m + 0.31:.2f} m at {q.peak_time}, "
                 f"on the exposed east side of the delta. The Grand Isle peak itself was not measured.")
        return rounds, brief
    calc = surge_calc(q)
    rounds = [[station_search(st)], [calc]]
    body = calc[2]
    brief = (f"CO-OPS {st.sid} {st.name}: window {s.window[0]}-{s.window[1]}, datum MHHW, 6-minute verified data. "
             f"Peak water level {body['peak_water_level_m']:.2f} m above MHHW. Peak surge (observed minus predicted) "
             f"{body['peak_surge_m']:.2f} m at {body['peak_surge_time']}. Source: NOAA CO-OPS, "
             f"https://tidesandcurrents.noaa.gov/waterlevels.html?id={st.sid}")
    return rounds, brief


def nearest(st: Station, found: list[Station]) -> tuple[str, dict, dict]:
    args = {"lat": st.lat, "lon": st.lon, "radius_km": 80}
    body = {"stations": [{"id": x.sid, "name": x.name, "lat": x.lat, "lon": x.lon} for x in found]}
    return "noaa_find_nearest_stations", args, fixture("noaa_find_nearest_stations", args, body)


def usgs_rounds(q: Surge) -> tuple[list, str]:
    s = q.s
    rounds = [[stn_event(s)], [stn_hwms(q)]]
    mean = round((q.hwm_lo_ft + q.hwm_hi_ft) / 2 - 0.4, 1)
    brief = (f"USGS STN event {s.stn_event} ({s.year} {s.name}): {q.hwm_n} high-water marks in {q.county} County, "
             f"{q.state}; elevations {q.hwm_lo_ft:.1f} to {q.hwm_hi_ft:.1f} ft NAVD88 (mean {mean:.1f} ft). HWMs are "
             f"surveyed peak water surfaces and include wave effects; they are not surge above predicted tide. "
             f"Source: USGS Short-Term Network, https://stn.wim.usgs.gov/STNServices/Events/{s.stn_event}.json")
    return rounds, brief


def surge_cons(q: Surge, with_usgs: bool) -> str:
    s, st = q.s, q.st
    when = f" at {q.peak_time}" if q.cite_time else ""
    cm = q.cons_m if q.cons_m is not None else q.answer_m
    if q.gap:
        text = (f"{s.name} ({s.sid}) made landfall on {s.lf_date} near {s.lf_place} with {s.lf_kt} kt winds. "
                f"NOAA CO-OPS {st.sid} ({st.name}) failed at 08:00 UTC on 29 August 2005 with the surge at "
                f"1.87 m above predicted tide and rising, so the gauge missed the peak. Shell Beach ({STATIONS['8761305'].sid}) "
                f"peaked higher on the exposed side of the delta. Datum MHHW.")
    else:
        text = (f"{s.name} ({s.sid}) made landfall on {s.lf_date} near {s.lf_place} with {s.lf_kt} kt winds. "
                f"NOAA CO-OPS {st.sid} ({st.name}) peaked at {q.water_level_m:.2f} m above MHHW{when}; "
                f"observed minus predicted tide gives a peak surge of about {cm:.2f} m.")
    if with_usgs:
        text += (f" USGS STN event {s.stn_event} lists {q.hwm_n} high-water marks in {q.county} County "
                 f"({q.hwm_lo_ft:.1f} to {q.hwm_hi_ft:.1f} ft NAVD88). The marks include wave effects and use a "
                 f"different datum, so they bound the gauge value from above rather than contradict it.")
        if q.gap:
            text += " They are the best evidence for the unmeasured Grand Isle peak."
    return text


def surge_answer(q: Surge, value: float, with_usgs: bool, hwm_text: str | None = None) -> str:
    s, st = q.s, q.st
    ident = f"NOAA CO-OPS station {st.sid}" if q.cite_station else "the NOAA tide gauge"
    when = f" at {hhmm(q.peak_time)} on {human_date(q.peak_time)}" if q.cite_time else f" on {human_date(q.peak_time)}"
    if q.gap:
        text = (f"The Grand Isle gauge ({ident}) failed at 08:00 UTC on 29 August 2005, before Katrina's peak, with "
                f"the surge at 1.87 m and still rising. Combining the rising gauge record with nearby stations and "
                f"USGS high-water marks, the peak storm surge at Grand Isle is estimated at about {value:.2f} m "
                f"({ft_of(value):.1f} ft) above the predicted tide.")
    elif q.hwm:
        gauge = q.gauge_truth_m if q.gauge_truth_m is not None else value
        text = (f"During Hurricane {s.name}, {ident} ({st.name}) recorded a peak of {value:.2f} m "
                f"({ft_of(value):.2f} ft) above MHHW{when}.")
        del gauge
    else:
        text = (f"The peak storm surge at {st.name.split(',')[0]} ({ident}) during Hurricane {s.name} was "
                f"{value:.2f} m ({ft_of(value):.1f} ft) above the predicted tide{when}.")
    if q.hwm and hwm_text:
        text += " " + hwm_text
    elif with_usgs and not q.gap:
        text += (f" USGS surveyed {q.hwm_n} high-water marks in {q.county} County; they sit higher than the gauge "
                 f"because they include wave effects at exposed sites.")
    return text


def surge_summary(q: Surge, with_usgs: bool) -> str:
    st, s = q.st, q.s
    if q.merge_surge:
        v = q.cons_m if q.cons_m is not None else q.answer_m
        text = f"{st.name} (CO-OPS {st.sid}) peak surge about {v:.2f} m above predicted tide during {s.name}."
    else:
        text = f"{st.name} (CO-OPS {st.sid}) peaked at {q.water_level_m:.2f} m above MHHW during {s.name}."
    if with_usgs:
        text += f" USGS lists {q.hwm_n} high-water marks in {q.county} County."
    return text


# ---------------------------------------------------------------------------
# Corpus entries
# ---------------------------------------------------------------------------


@dataclass
class Entry:
    id: str
    category: str
    query: str
    sqs: list
    source: str
    plan: dict | None = None  # architect output; derived from sqs when None
    nocons: dict = field(default_factory=dict)  # sub-question index -> surge value under raw concatenation
    fixed: dict = field(default_factory=dict)

    @property
    def multi(self) -> bool:
        return len(self.sqs) > 1


def sq_goal(q) -> str:
    if q.kind == "surge":
        what = "observed surge and high-water marks" if q.hwm else "storm surge"
        return f"{what} at {q.st.name} during {q.s.name} {q.s.year}"
    if q.kind == "category":
        return f"{'peak' if q.peak else 'landfall'} category of {q.s.name} {q.s.year}"
    if q.kind == "count":
        return f"number of {q.what} in the {q.year} Atlantic season"
    if q.kind == "zone":
        return f"FEMA flood zones for {q.p.name}"
    return f"current water level at {STATIONS[q.station].name}"


def sq_layers(q) -> list:
    if q.kind == "surge":
        if q.hwm:
            return [["nhc"], ["noaa_coops", "usgs"]]
        return [["noaa_coops"]] if q.omit_nhc else [["nhc"], ["noaa_coops"]]
    if q.kind in ("category", "count"):
        return [["nhc"]]
    if q.kind == "zone":
        return [["fema"]]
    return [["noaa_coops"]]


def model_plan(e: Entry) -> dict:
    if e.plan is not None:
        return e.plan
    tracks = [{"goal": sq_goal(q), "layers": sq_layers(q)} for q in e.sqs]
    topo = "parallel_tracks" if len(tracks) > 1 else "linear"
    why = ("independent sub-questions get their own tracks" if len(tracks) > 1
           else "a single question answered by one pipeline")
    return {"topology": topo, "tracks": tracks, "rationale": why}


def reference(q) -> dict:
    if q.kind == "surge":
        if q.hwm:
            if q.band is not None and q.gauge_truth_m is not None:
                lo, hi = q.band
                mid = (lo + hi) / 2 if hi is not None else lo
                return {"kind": "multi", "parts": [
                    {"kind": "surge", "meters": round(q.gauge_truth_m, 4)},
                    {"kind": "surge", "meters": round(mid, 4), "band": {"lo": round(lo, 4), "hi": None if hi is None else round(hi, 4)}},
                ]}
            if q.band is not None:
                lo, hi = q.band
                mid = (lo + hi) / 2 if hi is not None else lo
                return {"kind": "surge", "meters": round(mid, 4),
                        "band": {"lo": round(lo, 4), "hi": None if hi is None else round(hi, 4)}}
        return {"kind": "surge", "meters": q.truth_m}
    if q.kind == "category":
        return {"kind": "category", "label": f"Cat {q.cat}"}
    if q.kind == "count":
        return {"kind": "count", "value": q.value}
    if q.kind == "zone":
        return {"kind": "flood_zone", "zones": list(q.p.zones)}
    return {"kind": "station", "station": q.station}


def rubric(q) -> list:
    if q.kind == "surge":
        station = q.station if q.station else r"\d{7}"
        return [
            {"name": "station_id", "pattern": rf"\b{station}\b"},
            {"name": "vertical_datum", "pattern": r"\b(?:NAVD ?88|NGVD ?29|MHHW|MLLW|MSL)\b"},
            {"name": "temporal_reference", "pattern": r"\b\d{2}:\d{2} UTC\b"},
            {"name": "source_name", "pattern": r"(?i)\bNOAA\b|CO-OPS|Tides (?:and|&) Currents|\bUSGS\b"},
        ]
    if q.kind == "category":
        return [
            {"name": "source_name", "pattern": r"(?i)\bNHC\b|National Hurricane Center|Tropical Cyclone Report|HURDAT2?"},
            {"name": "storm_identifier", "pattern": rf"\b{q.s.sid}\b|\b{q.s.year}\b"},
        ]
    if q.kind == "count":
        return [
            {"name": "database", "pattern": r"(?i)HURDAT2?|\bNHC\b|National Hurricane Center"},
            {"name": "year", "pattern": rf"\b{q.year}\b"},
        ]
    if q.kind == "zone":
        return [
            {"name": "source_name", "pattern": r"(?i)\bFEMA\b|\bNFHL\b|National Flood Hazard Layer"},
            {"name": "zone_code", "pattern": r"\b(?:VE|AE|AO|AH|A99|X)\b"},
        ]
    return [
        {"name": "source_name", "pattern": r"(?i)\bNOAA\b|CO-OPS"},
        {"name": "station_id", "pattern": rf"\b{q.station}\b"},
    ]


def expected_agents(q) -> set:
    if q.kind == "surge":
        return {"nhc", "noaa_coops", "usgs"} if q.hwm else {"nhc", "noaa_coops"}
    if q.kind in ("category", "count"):
        return {"nhc"}
    if q.kind == "zone":
        return {"fema"}
    return {"noaa_coops"}


def kind_of(q) -> str:
    if q.kind == "surge":
        if q.hwm and q.band is not None and q.gauge_truth_m is not None:
            return "multi"
        return "surge"
    return {"category": "category", "count": "count", "zone": "flood_zone", "station": "station"}[q.kind]


def corpus_record(e: Entry) -> dict:
    agents = set()
    for q in e.sqs:
        agents |= expected_agents(q)
    if e.multi:
        truth = {"kind": "multi", "parts": [reference(q) for q in e.sqs]}
        rub = []
        for i, q in enumerate(e.sqs):
            for c in rubric(q):
                rub.append({"name": f"{q.kind}{i + 1}.{c['name']}", "pattern": c["pattern"]})
        kind = "multi"
    else:
        truth = reference(e.sqs[0])
        rub = rubric(e.sqs[0])
        kind = kind_of(e.sqs[0])
    return {
        "id": e.id,
        "category": e.category,
        "query": e.query,
        "kind": kind,
        "expected_topology": "parallel_tracks" if e.multi else "linear",
        "expected_agents": sorted(agents),
        "ground_truth": truth,
        "rubric": rub,
        "source_citation": e.source,
        "scenario_script": f"scenarios/{e.id}.json",
        "fixtures_ref": "fixtures",
        "sub_questions": len(e.sqs),
    }


# ---------------------------------------------------------------------------
# Building scripts for one query
# ---------------------------------------------------------------------------

RAW = r"### t\d+\.l\d+\."


def spec_work(q, agent: str, track_goal: str):
    """(rounds, brief) for `agent` working on sub-question `q`."""
    if agent == "nhc":
        if q.kind == "category":
            return [[storm_search(q.s)], [best_track(q.s)]], category_brief(q)
        if q.kind == "count":
            return [[season(q.year)]], count_brief(q)
        if q.kind == "surge":
            return [[storm_search(q.s)], [best_track(q.s)]], nhc_track_brief(q.s, q.st.name)
        return [], f"No named storm is involved in '{track_goal}'; no NHC lookup was needed."
    if agent == "noaa_coops":
        if q.kind == "surge":
            return noaa_surge_rounds(q)
        if q.kind == "station":
            return station_now_rounds(STATIONS[q.station])
        return [], f"No tide-gauge record answers '{track_goal}'; no CO-OPS query was made."
    if agent == "usgs":
        if q.kind == "surge":
            return usgs_rounds(q)
        return [], f"No USGS Short-Term Network event applies to '{track_goal}'; no high-water marks were requested."
    if agent == "fema":
        if q.kind == "zone":
            return [[geocode(q.p)], [nfhl(q.p)]], zone_brief(q)
        return [], f"No flood-zone determination is needed for '{track_goal}'."
    raise SystemExit(f"no work for {agent} on {q.kind}")


def station_now_rounds(st: Station) -> tuple[list, str]:
    args = {"station": st.sid, "product": "water_level", "datum": "MLLW"}
    body = {"station": st.sid, "name": st.name, "product": "water_level", "datum": "MLLW", "units": "meters",
            "latest": {"time": "2025-06-02 18:06 UTC", "value_m": 1.42, "predicted_m": 1.33, "residual_m": 0.09},
            "url": f"https://tidesandcurrents.noaa.gov/waterlevels.html?id={st.sid}"}
    rounds = [[station_search(st)], [("noaa_coops_datagetter", args, fixture("noaa_coops_datagetter", args, body))]]
    brief = (f"CO-OPS {st.sid} {st.name}: latest verified-preliminary water level 1.42 m above MLLW at "
             f"2025-06-02 18:06 UTC; predicted tide 1.33 m, residual +0.09 m. Source: NOAA CO-OPS, "
             f"https://tidesandcurrents.noaa.gov/waterlevels.html?id={st.sid}")
    return rounds, brief


def station_now_answer(st: Station) -> str:
    return (f"At NOAA CO-OPS station {st.sid} ({st.name}) the latest reading, at 18:06 UTC on 2 June 2025, was "
            f"1.42 m above MLLW, 0.09 m above the predicted tide. Conditions are normal, with no storm-driven "
            f"anomaly.")


def hwm_text(q: Surge, variant: str = "full") -> str:
    if q.hwm_answer is not None and variant != "fixed":
        return q.hwm_answer
    return (f"USGS high-water marks in {q.county} County ranged from {q.hwm_lo_ft:.1f} to {q.hwm_hi_ft:.1f} ft "
            f"NAVD88; they are higher than the gauge because they sit on the exposed coast and include wave effects.")


def answer_for(q, variant: str, idx: int, with_usgs: bool, e: Entry) -> str | None:
    """Reporter paragraph for one sub-question; None when the reporter drops it."""
    if q.kind == "surge":
        if variant == "nocons":
            v = e.nocons.get(idx, q.answer_m)
        elif variant == "fixed":
            v = e.fixed.get(idx, q.water_level_m)
        else:
            v = q.answer_m
        if variant == "fixed" and q.hwm:
            return surge_answer(q, v, with_usgs, hwm_text=None).split(" USGS")[0]
        return surge_answer(q, v, with_usgs, hwm_text(q) if q.hwm else None)
    if q.kind == "category":
        return category_answer(q)
    if q.kind == "count":
        if variant == "fixed" and idx > 0:
            return None
        return count_answer(q)
    if q.kind == "zone":
        if variant == "fixed":
            return zone_answer(q, zones=q.p.zones[:1])
        return zone_answer(q)
    return station_now_answer(STATIONS[q.station])


def sq_title(q) -> str:
    if q.kind == "surge":
        return f"Storm surge at {q.st.name.split(',')[0]} during {q.s.name}"
    if q.kind == "category":
        return f"Hurricane {q.s.name} {'peak intensity' if q.peak else 'landfall category'}"
    if q.kind == "count":
        return f"{q.what.capitalize()} in the {q.year} season"
    if q.kind == "zone":
        return f"FEMA flood zones for {q.p.name.split(',')[0]}"
    return "Current water level"


def reporter_text(e: Entry, variant: str, usgs_by_sq: list[bool]) -> str:
    paras = []
    for i, q in enumerate(e.sqs):
        a = answer_for(q, variant, i, usgs_by_sq[i], e)
        if a is not None:
            paras.append((q, a))
    if len(e.sqs) == 1:
        return paras[0][1]
    out = []
    for n, (q, a) in enumerate(paras, 1):
        out.append(f"**{n}. {sq_title(q)}**\n{a}")
    if variant == "fixed" and len(paras) < len(e.sqs):
        out.append("The remaining part of the question could not be addressed from the retrieved material.")
    return "\n\n".join(out)


def build_planned(e: Entry, name: str | None = None, budget: dict | None = None,
                  plan: dict | None = None, query: str | None = None) -> Script:
    """Script for the planned (architect) graph, covering full, no-consolidation
    and no-reporter runs."""
    query = query or e.query
    mp = plan or model_plan(e)
    final = rewrite(mp, features(query))
    comp = compile_ids(final)
    sc = Script(name or e.id, query)
    sc.add(Exchange("architect", "graph_architect", 0, json.dumps(mp, ensure_ascii=False)))
    usgs_by_sq = [any("usgs" in l for l in tr["layers"]) for tr in final["tracks"]]
    summaries = []
    cons_inputs = 0
    for t, (stages, tr) in enumerate(zip(comp.tracks, final["tracks"])):
        q = e.sqs[t]
        for kind, nodes, layer in stages:
            if kind == "spec":
                for node, agent in zip(nodes, layer):
                    rounds, brief = spec_work(q, agent, tr["goal"])
                    specialist(sc, node, rounds, brief)
                    cons_inputs += len(brief)
            elif kind == "cons":
                sc.add(Exchange("consolidator", nodes[0], 0, surge_cons(q, "usgs" in layer), inputs=cons_inputs))
        summaries.append(sq_summary(q, usgs_by_sq[t]))
    brief_len = cons_inputs
    if comp.merge:
        merge = "\n".join(f"Track {i + 1} ({tr['goal']}): {s}" for i, (tr, s) in enumerate(zip(final["tracks"], summaries)))
        sc.add(Exchange("consolidator", comp.merge, 0, merge, inputs=cons_inputs))
        brief_len = len(merge)
    if any(k == "cons" for st in comp.tracks for k, _, _ in st) or comp.merge:
        sc.add(Exchange("reporter", comp.reporter, 0, reporter_text(e, "nocons", usgs_by_sq),
                        pattern=RAW, counted=False, inputs=cons_inputs * 2))
    sc.add(Exchange("reporter", comp.reporter, 0, reporter_text(e, "full", usgs_by_sq), inputs=brief_len))
    # A guarded reply must come before the generic one for the same node.
    sc.ex.sort(key=lambda x: (x.pattern is None,))
    sc.finish(budget)
    return sc


def sq_summary(q, with_usgs: bool) -> str:
    if q.kind == "surge":
        return surge_summary(q, with_usgs)
    if q.kind == "category":
        return category_summary(q)
    if q.kind == "count":
        return count_summary(q)
    if q.kind == "zone":
        return zone_summary(q)
    return station_now_answer(STATIONS[q.station])


def build_fixed(e: Entry) -> Script:
    """Script for the static [nhc] -> [noaa_coops, usgs] -> [fema] graph."""
    sc = Script(f"{e.id}-fixed-graph", e.query)
    goal = e.query

    def first(kinds):
        return next((q for q in e.sqs if q.kind in kinds), None)

    surge = first({"surge"})
    nhc_q = first({"category", "count", "surge"})
    # The single NHC node juggles every storm-related sub-question.
    nhc_rounds, nhc_briefs = [], []
    for q in e.sqs:
        if q.kind in ("category", "count", "surge"):
            r, b = spec_work(q, "nhc", goal)
            nhc_rounds.extend(r)
            nhc_briefs.append(b)
    if nhc_q is None:
        specialist(sc, "t0.l0.nhc", [], "No named storm or season statistic is asked for; no NHC lookup was needed.")
    else:
        specialist(sc, "t0.l0.nhc", dedupe_rounds(nhc_rounds), " ".join(nhc_briefs))
    station_q = first({"station"})
    if surge is not None:
        r, b = noaa_surge_rounds(surge)
        specialist(sc, "t0.l1.noaa_coops", r, b)
        r2, b2 = usgs_rounds(surge)
        specialist(sc, "t0.l1.usgs", r2, b2)
        cons = surge_cons(surge, True)
    elif station_q is not None:
        r, b = station_now_rounds(STATIONS[station_q.station])
        specialist(sc, "t0.l1.noaa_coops", r, b)
        specialist(sc, "t0.l1.usgs", [], "No storm event is named; no USGS high-water marks apply.")
        cons = b + " No USGS high-water marks apply."
    else:
        specialist(sc, "t0.l1.noaa_coops", [], "No tide-gauge record answers this question; no CO-OPS query was made.")
        specialist(sc, "t0.l1.usgs", [], "No storm event with surveyed high-water marks applies; no USGS query was made.")
        cons = "Neither CO-OPS nor USGS holds data relevant to this question."
    sc.add(Exchange("consolidator", "t0.l2.consolidator", 0, cons, inputs=900))
    zone = first({"zone"})
    if zone is not None:
        r, b = spec_work(zone, "fema", goal)
        specialist(sc, "t0.l3.fema", r, b)
    elif surge is not None:
        place = next((p for p in PLACES.values() if p.name.split(",")[0] in surge.st.name), None)
        if place is not None:
            r, b = spec_work(ZoneQ(place.key), "fema", goal)
            specialist(sc, "t0.l3.fema", r, b)
        else:
            specialist(sc, "t0.l3.fema", [], "No flood-zone determination was requested.")
    else:
        specialist(sc, "t0.l3.fema", [], "No flood-zone determination was requested.")
    usgs = [q.kind == "surge" for q in e.sqs]
    sc.add(Exchange("reporter", compile_ids(STATIC_PLAN).reporter, 0, reporter_text(e, "fixed", usgs), inputs=2400))
    sc.finish()
    return sc


def dedupe_rounds(rounds: list) -> list:
    seen, out = set(), []
    for r in rounds:
        key = canonical([(t, a) for t, a, _ in r])
        if key not in seen:
            seen.add(key)
            out.append(r)
    return out


# ---------------------------------------------------------------------------
# The corpus
# ---------------------------------------------------------------------------


def S(storm, station, truth, answer, wl, t, county, state, n, lo, hi, **kw) -> Surge:
    return Surge(storm, station, truth, answer, wl, t, county, state, n, lo, hi, **kw)


IKE_GALV = dict(storm="ike", station="8771450", truth=2.44, answer=2.44, wl=3.35, t="2008-09-13 07:48 UTC",
                county="Galveston", state="TX", n=37, lo=8.9, hi=17.5)
SANDY_BATT = dict(storm="sandy", station="8518750", truth=2.81, answer=2.74, wl=2.87, t="2012-10-30 01:24 UTC",
                  county="New York", state="NY", n=19, lo=10.2, hi=14.3)
IRMA_KW = dict(storm="irma", station="8724580", truth=0.98, answer=0.92, wl=1.12, t="2017-09-10 13:00 UTC",
               county="Monroe", state="FL", n=42, lo=3.1, hi=8.2)
KAT_DAUPHIN = dict(storm="katrina", station="8735180", truth=1.64, answer=1.52, wl=1.98, t="2005-08-29 15:00 UTC",
                   county="Mobile", state="AL", n=33, lo=8.6, hi=14.1)


def s_(base: dict, **kw) -> Surge:
    d = dict(base)
    d.update(kw)
    return S(d.pop("storm"), d.pop("station"), d.pop("truth"), d.pop("answer"), d.pop("wl"), d.pop("t"),
             d.pop("county"), d.pop("state"), d.pop("n"), d.pop("lo"), d.pop("hi"), **d)


def corpus() -> list[Entry]:
    c = []
    # Single-agent NHC.
    c += [
        Entry("S01", "single_nhc", "How many named storms were in the 2005 Atlantic hurricane season?",
              [CountQ(2005, "named storms")], "28 named (NHC Storm Totals)"),
        Entry("S02", "single_nhc", "What category was Hurricane Michael when it made landfall in Florida in 2018?",
              [CategoryQ("michael")], "Cat 5, 140 kt (TCR AL142018)"),
        Entry("S03", "single_nhc", "What category was Hurricane Harvey at landfall in Texas in 2017?",
              [CategoryQ("harvey")], "Cat 4, 115 kt (TCR AL092017)"),
        Entry("S04", "single_nhc", "What was the peak intensity of Hurricane Katrina in 2005?",
              [CategoryQ("katrina", peak=True)], "Cat 5, 150 kt (TCR AL122005)"),
        Entry("S05", "single_nhc", "How many hurricanes occurred in the 2017 Atlantic season?",
              [CountQ(2017, "hurricanes")], "10 hurricanes (NHC Storm Totals)"),
        Entry("S06", "single_nhc", "How many named storms were in the 2020 Atlantic hurricane season?",
              [CountQ(2020, "named storms")], "30 named (NHC Storm Totals)"),
        Entry("S07", "single_nhc", "What category was Hurricane Ike when it made landfall in Texas in 2008?",
              [CategoryQ("ike")], "Cat 2, 95 kt (TCR AL092008)"),
    ]
    # Single-agent FEMA / NOAA.
    c += [
        Entry("O01", "single_fema_noaa", "What are the FEMA flood zones for Miami Beach, Florida?",
              [ZoneQ("miami_beach")], "AE, VE; SFHA (NFHL MapServer)"),
        Entry("O02", "single_fema_noaa", "What is the FEMA flood zone designation for Tampa, Florida?",
              [ZoneQ("tampa")], "AE; SFHA (NFHL MapServer)"),
        Entry("O03", "single_fema_noaa", "What are the current water level conditions at San Francisco tide station?",
              [StationNow("9414290")], "Live data, stn 9414290 (CO-OPS API)"),
        Entry("O04", "single_fema_noaa", "What is the FEMA flood zone for Galveston, Texas?",
              [ZoneQ("galveston")], "VE, AE; SFHA (NFHL MapServer)"),
        Entry("O05", "single_fema_noaa", "What are the FEMA flood zones for Charleston, South Carolina?",
              [ZoneQ("charleston")], "AE, VE; SFHA (NFHL MapServer)"),
    ]
    # Linear NHC -> NOAA.
    c += [
        Entry("L01", "linear_nhc_noaa", "What was the storm surge at Galveston during Hurricane Ike in 2008?",
              [s_(IKE_GALV, cite_time=False, cons_m=2.30, omit_nhc=True)], "2.44 m, stn 8771450 (CO-OPS 079)",
              nocons={0: 2.36}),
        Entry("L02", "linear_nhc_noaa", "What was the peak storm surge at The Battery, New York during Hurricane Sandy in 2012?",
              [s_(SANDY_BATT)], "2.81 m, stn 8518750 (TCR AL182012)"),
        Entry("L03", "linear_nhc_noaa", "What was the storm surge at Grand Isle during Hurricane Katrina in 2005?",
              [S("katrina", "8761724", 2.5, 2.39, 2.61, "2005-08-29 12:12 UTC", "Jefferson", "LA", 26, 7.9, 13.6,
                 gap=True, cons_m=1.87, omit_nhc=True)],
              "~2.5 m, stn 8761724; gauge gap (CO-OPS 067)", nocons={0: 2.10}, fixed={0: 1.87}),
        Entry("L04", "linear_nhc_noaa", "What was the storm surge at Key West during Hurricane Irma in 2017?",
              [s_(IRMA_KW)], "0.98 m, stn 8724580 (CO-OPS Irma Report)"),
        Entry("L05", "linear_nhc_noaa", "What was the observed storm surge at Sabine Pass during Hurricane Ike?",
              [S("ike", "8770570", 3.90, 3.62, 4.05, "2008-09-13 08:42 UTC", "Jefferson", "TX", 28, 10.4, 16.9,
                 cite_time=False, omit_nhc=True)], "3.90 m (12.79 ft), Sabine Pass North (TCR AL092008)"),
        Entry("L06", "linear_nhc_noaa", "What was the storm surge at Dauphin Island during Hurricane Katrina?",
              [s_(KAT_DAUPHIN)], "1.64 m, stn 8735180 (CO-OPS 067)"),
        Entry("L07", "linear_nhc_noaa", "What was the storm surge at Virginia Key, Miami during Hurricane Irma?",
              [S("irma", "8723214", 0.61, 0.73, 0.95, "2017-09-10 18:36 UTC", "Miami-Dade", "FL", 25, 2.9, 6.4,
                 cite_time=False, omit_nhc=True)], "0.61 m, stn 8723214 (CO-OPS Irma Report)"),
        Entry("L08", "linear_nhc_noaa", "What was the observed storm surge at Sewells Point, Virginia during Hurricane Isabel in 2003?",
              [S("isabel", "8638610", 1.46, 1.34, 1.62, "2003-09-19 01:30 UTC", "Norfolk", "VA", 16, 6.1, 8.8)],
              "1.46 m, stn 8638610 (TCR AL132003)"),
    ]
    # Linear NHC -> NOAA + USGS.
    c += [
        Entry("M01", "linear_nhc_nu", "What was the observed storm surge and high water marks near Fort Myers during Hurricane Ian in 2022?",
              [S("ian", "8725520", 7.26 * FT, 7.26 * FT, 2.30, "2022-09-28 22:18 UTC", "Lee", "FL", 255, 10.1, 14.8,
                 hwm=True, band=(10 * FT, 15 * FT), gauge_truth_m=7.26 * FT, cite_time=False,
                 hwm_answer="USGS high-water marks along Fort Myers Beach and Sanibel ranged from 10.1 to 14.8 ft "
                            "NAVD88, well above the gauge because the gauge sits upriver on the Caloosahatchee.")],
              "Gauge 7.26 ft MHHW; HWMs 10-15 ft (TCR AL092022)", nocons={0: 2.30}),
        Entry("M02", "linear_nhc_nu", "What were the storm surge observations and surveyed peak water levels at Galveston during Hurricane Ike?",
              [S("ike", "8771450", 2.44, 2.36, 3.35, "2008-09-13 07:48 UTC", "Galveston", "TX", 37, 8.9, 17.5,
                 hwm=True, band=(4.6, 6.1), gauge_truth_m=2.44, cite_time=False)],
              "CO-OPS ~2.44 m; HWMs 4.6-6.1 m (CO-OPS 079)"),
        Entry("M03", "linear_nhc_nu", "What was the observed storm surge and high water marks near Naples during Hurricane Ian?",
              [S("ian", "8725110", 9 * FT, 1.28, 1.28, "2022-09-28 17:42 UTC", "Collier", "FL", 64, 5.2, 8.1,
                 hwm=True, band=(9 * FT, None), cite_time=False, cite_station=False,
                 hwm_answer="USGS high-water marks in Collier County reached up to 8.1 ft above MHHW near Naples.")],
              "Naples gauge; USGS >9 ft MHHW (TCR AL092022)"),
        Entry("M04", "linear_nhc_nu", "What were the observed surge and surveyed peak water levels near Pensacola during Hurricane Ivan in 2004?",
              [S("ivan", "8729840", 4.0, 2.59, 2.59, "2004-09-16 05:00 UTC", "Escambia", "FL", 48, 7.2, 8.5,
                 hwm=True, band=(3.0, 5.0), cite_time=False, cite_station=False,
                 hwm_answer="USGS high-water marks in Escambia County ranged from 7.2 to 8.5 ft NAVD88.")],
              "~3-5 m east of eye (TCR AL092004)"),
        Entry("M05", "linear_nhc_nu", "What were the observed surge and high water marks during Hurricane Sandy at Kings Point, New York?",
              [S("sandy", "8516945", 3.56, 2.93, 3.02, "2012-10-30 02:54 UTC", "Nassau", "NY", 21, 9.6, 11.8,
                 hwm=True, hwm_answer="USGS high-water marks in Nassau County ranged from 9.6 to 11.8 ft NAVD88.")],
              "3.56 m, stn 8516945 (TCR AL182012)"),
    ]
    # Parallel two-track.
    c += [
        Entry("P01", "parallel2", "What was the storm surge at Galveston during Hurricane Ike in 2008, and what are the FEMA flood zones for Miami Beach?",
              [s_(IKE_GALV, cite_time=False, merge_surge=False), ZoneQ("miami_beach")], "CO-OPS 079 + NFHL",
              nocons={0: 2.36}),
        Entry("P02", "parallel2", "How many named storms were in the 2005 season, and what was the peak surge at The Battery during Hurricane Sandy?",
              [CountQ(2005, "named storms"), s_(SANDY_BATT, cite_time=False)], "NHC Totals + TCR"),
        Entry("P03", "parallel2", "What category was Hurricane Harvey at landfall, and what are the FEMA flood zones near Corpus Christi, Texas?",
              [CategoryQ("harvey"), ZoneQ("corpus")], "TCR + NFHL"),
        Entry("P04", "parallel2", "What was the storm surge at Key West during Irma in 2017, and how many hurricanes were in the 2017 season?",
              [s_(IRMA_KW, cite_time=False), CountQ(2017, "hurricanes")], "CO-OPS Irma + NHC"),
        Entry("P05", "parallel2", "What was the storm surge at Dauphin Island during Katrina, and what are the FEMA flood zones for Galveston?",
              [s_(KAT_DAUPHIN, cite_time=False), ZoneQ("galveston")], "CO-OPS 067 + NFHL"),
        Entry("P06", "parallel2", "What category was Hurricane Ike at landfall, and what was the storm surge at The Battery during Sandy?",
              [CategoryQ("ike"), s_(SANDY_BATT)], "TCRs"),
        Entry("P07", "parallel2", "How many named storms were in the 2020 season, and what are the FEMA flood zones for Charleston?",
              [CountQ(2020, "named storms"), ZoneQ("charleston")], "NHC Totals + NFHL"),
    ]
    # Complex three-track.
    c += [
        Entry("C01", "complex3", "What was the observed storm surge at Galveston during Hurricane Ike in 2008, and how many named storms were in the 2005 Atlantic season, and what are the FEMA flood zones for Tampa?",
              [s_(IKE_GALV, cite_time=False, merge_surge=False), CountQ(2005, "named storms"), ZoneQ("tampa")],
              "CO-OPS 079 + NHC + NFHL", nocons={0: 2.30}),
        Entry("C02", "complex3", "What was the storm surge at The Battery during Sandy, and what category was Hurricane Michael at landfall, and what is the FEMA flood zone for Miami Beach?",
              [s_(SANDY_BATT), CategoryQ("michael"), ZoneQ("miami_beach")], "TCRs + NFHL"),
        Entry("C03", "complex3", "What was the surge at Key West during Irma, and how many hurricanes were in the 2017 season, and what are the FEMA flood zones for Galveston?",
              [s_(IRMA_KW), CountQ(2017, "hurricanes"), ZoneQ("galveston")], "CO-OPS Irma + NHC + NFHL"),
        Entry("C04", "complex3", "What category was Harvey at landfall in 2017, and what was the storm surge at Dauphin Island during Katrina, and what are the FEMA flood zones for Tampa?",
              [CategoryQ("harvey"), s_(KAT_DAUPHIN, cite_time=False), ZoneQ("tampa")], "TCRs + CO-OPS 067 + NFHL"),
        Entry("C05", "complex3", "What was the surge at Galveston during Ike, and what category was Hurricane Katrina at peak intensity, and what are the FEMA flood zones for Charleston?",
              [s_(IKE_GALV), CategoryQ("katrina", peak=True), ZoneQ("charleston")], "CO-OPS 079 + TCR + NFHL"),
    ]
    return c


# Token budget of the representative subset, per query and per stage.
SUBSET = ["S02", "L01", "L03", "M01", "O01", "P01", "C01"]
QUERY_TOKENS = {"S02": 16_546, "O01": 14_910, "M01": 55_997, "L01": 96_959, "L03": 136_460, "P01": 103_097,
                "C01": 103_525}
STAGE_TOKENS = {"architect": (21_533, 1_572), "specialist": (468_643, 17_515), "consolidator": (4_697, 1_869),
                "reporter": (9_227, 2_438)}


def subset_budgets(entries: dict[str, Entry]) -> dict[str, dict]:
    drafts = {i: build_planned(entries[i]) for i in SUBSET}

    def weights(stage: str, side: int) -> list[int]:
        return [sum(e.usage[side] for e in drafts[i].ex if e.stage == stage and e.counted) for i in SUBSET]

    alloc: dict[str, dict] = {i: {} for i in SUBSET}
    for stage in ("architect", "consolidator", "reporter"):
        tin, tout = STAGE_TOKENS[stage]
        ins = allocate(tin, weights(stage, 0))
        outs = allocate(tout, weights(stage, 1))
        for i, a, b in zip(SUBSET, ins, outs):
            alloc[i][stage] = (a, b)
    spec_out = allocate(STAGE_TOKENS["specialist"][1], weights("specialist", 1))
    for i, o in zip(SUBSET, spec_out):
        others = sum(a + b for a, b in alloc[i].values())
        alloc[i]["specialist"] = (QUERY_TOKENS[i] - others - o, o)
    assert sum(v["specialist"][0] for v in alloc.values()) == STAGE_TOKENS["specialist"][0]
    return alloc


# ---------------------------------------------------------------------------
# Stress suite
# ---------------------------------------------------------------------------

T4 = Entry("T4", "complex3", "What was the storm surge at Galveston during Ike in 2008, and what category was Hurricane Michael at landfall, and what are the FEMA flood zones for Miami Beach, and how many named storms were in the 2020 season?",
           [s_(IKE_GALV, answer=2.21, cite_time=False), CategoryQ("michael"), ZoneQ("miami_beach"),
            CountQ(2020, "named storms")], "CO-OPS 079 + TCR + NFHL + NHC Totals")
T5 = Entry("T5", "complex3", "What was the storm surge at The Battery during Sandy, and what category was Hurricane Harvey at landfall, and what are the FEMA flood zones for Tampa, and how many hurricanes were in the 2017 season, and what was the surge at Key West during Irma?",
           [s_(SANDY_BATT), CategoryQ("harvey"), ZoneQ("tampa"), CountQ(2017, "hurricanes"), s_(IRMA_KW)],
           "TCR + NFHL + NHC Totals + CO-OPS Irma")


def paraphrases(entries: dict[str, Entry]) -> tuple[list, list[Script]]:
    l01, s02, o01, p01 = (entries[k] for k in ("L01", "S02", "O01", "P01"))
    scripts = []
    groups = []

    def variant(base: Entry, v: str, query: str, sqs: list, plan: dict | None = None):
        e = Entry(f"{base.id}{v}", base.category, query, sqs, base.source)
        sc = build_planned(e, name=f"{base.id}{v}", plan=plan)
        scripts.append((f"scenarios/paraphrase/{base.id}{v}.json", sc))
        return {"variant": v, "query": query, "scenario_script": f"scenarios/paraphrase/{base.id}{v}.json"}

    ike = lambda **kw: s_(IKE_GALV, cite_time=False, **kw)
    groups.append({"group": "L01", "label": "Surge", "variants": [
        {"variant": "a", "query": l01.query, "scenario_script": "scenarios/L01.json"},
        variant(l01, "b", "How high did the water surge get in Galveston, TX when Ike hit in 2008?", [ike(answer=2.36)]),
        variant(l01, "c", "Ike 2008 — observed surge height at Galveston tide gauge?", [ike(answer=2.28)]),
    ]})
    groups.append({"group": "S02", "label": "Category", "variants": [
        {"variant": "a", "query": s02.query, "scenario_script": "scenarios/S02.json"},
        variant(s02, "b", "Michael 2018 — what Saffir–Simpson category at Florida landfall?", [CategoryQ("michael")]),
        variant(s02, "c", "How strong was Hurricane Michael when it struck the Florida coast in 2018?", [CategoryQ("michael")]),
    ]})
    groups.append({"group": "O01", "label": "Flood zone", "variants": [
        {"variant": "a", "query": o01.query, "scenario_script": "scenarios/O01.json"},
        variant(o01, "b", "What FEMA NFHL flood zone designation applies to Miami Beach?", [ZoneQ("miami_beach")]),
        variant(o01, "c", "Is Miami Beach in a special flood hazard area?  What zones does FEMA show?", [ZoneQ("miami_beach")]),
    ]})
    p01c_sqs = [ike(answer=2.20, merge_surge=False), ZoneQ("miami_beach")]
    p01c_plan = {"topology": "parallel_tracks", "rationale": "two independent requests", "tracks": [
        {"goal": sq_goal(p01c_sqs[0]), "layers": [["noaa_coops"]]},
        {"goal": sq_goal(p01c_sqs[1]), "layers": [["fema"]]}]}
    groups.append({"group": "P01", "label": "Parallel", "variants": [
        {"variant": "a", "query": p01.query, "scenario_script": "scenarios/P01.json"},
        variant(p01, "b", "Two questions: (1) how high was the surge in Galveston from Ike 2008, and (2) what FEMA flood zones cover Miami Beach?",
                [ike(answer=2.30, merge_surge=False), ZoneQ("miami_beach")]),
        variant(p01, "c", "I need the Ike 2008 storm surge data for Galveston and also the FEMA flood zone map for Miami Beach.",
                p01c_sqs, plan=p01c_plan),
    ]})
    return groups, [s for s in scripts]


def adversarial() -> tuple[list, list]:
    cases, scripts = [], []
    galv = STATIONS["8771450"]
    sandy = STORMS["sandy"]

    def add(case: dict, sc: Script):
        path = f"scenarios/adversarial/{case['id']}.json"
        case["scenario_script"] = path
        cases.append(case)
        sc.finish()
        scripts.append((path, sc))

    # ADV1: Sandy never reached the Gulf.
    q = "What was the storm surge at Galveston during Hurricane Sandy in 2012?"
    sc = Script("ADV1", q)
    plan = {"topology": "linear", "rationale": "surge lookup", "tracks": [{"goal": "storm surge at Galveston during Sandy 2012", "layers": [["nhc"], ["noaa_coops"]]}]}
    sc.add(Exchange("architect", "graph_architect", 0, json.dumps(plan)))
    specialist(sc, "t0.l0.nhc", [[storm_search(sandy)], [best_track(sandy)]],
               f"NHC best track {sandy.sid} (Sandy 2012): the track ran from the Caribbean through the Bahamas and up the "
               f"US East Coast to landfall near {sandy.lf_place} on {sandy.lf_date}. Sandy never entered the Gulf of Mexico; "
               f"its closest approach to Galveston, Texas was more than 1,500 km away.")
    window = {"station": galv.sid, "begin_date": "20121028", "end_date": "20121031", "datum": "MHHW"}
    body = {"station": galv.sid, "name": galv.name, "datum": "MHHW", "units": "meters", "peak_surge_m": 0.12,
            "peak_surge_time": "2012-10-29 14:00 UTC", "method": "observed minus predicted (6-minute verified data)",
            "url": f"https://tidesandcurrents.noaa.gov/waterlevels.html?id={galv.sid}"}
    specialist(sc, "t0.l1.noaa_coops", [[station_search(galv)], [("noaa_compute_surge", window, fixture("noaa_compute_surge", window, body))]],
               f"CO-OPS {galv.sid} {galv.name}, 28-31 October 2012: residual within normal tidal noise (largest 0.12 m at "
               f"2012-10-29 14:00 UTC). No storm signal.")
    ev_args = {"storm": "Sandy", "year": 2012}
    fixture("usgs_stn_resolve_storm_event", ev_args, {"event_id": sandy.stn_event, "event_name": "2012 Sandy",
            "url": f"https://stn.wim.usgs.gov/STNServices/Events/{sandy.stn_event}.json"})
    hw_args = {"event_id": sandy.stn_event, "state": "TX", "county": "Galveston"}
    fixture("usgs_stn_get_hwms", hw_args, {"event_id": sandy.stn_event, "state": "TX", "county": "Galveston", "count": 0, "hwms": []})
    specialist(sc, "t0.l1.usgs", [[("usgs_stn_resolve_storm_event", ev_args, None)], [("usgs_stn_get_hwms", hw_args, None)]],
               "USGS STN event 135 (2012 Sandy) has no high-water marks in Texas; all deployments were in the Mid-Atlantic and Northeast.")
    sc.add(Exchange("consolidator", "t0.l2.consolidator", 0,
                    "Sandy (AL182012) tracked up the US East Coast and never affected the Texas coast. CO-OPS 8771450 shows "
                    "only normal tidal variation during 28-31 October 2012 and USGS has no Sandy high-water marks in Texas.", inputs=1200))
    sc.add(Exchange("reporter", "t*.l3.reporter", 0,
                    "Hurricane Sandy did not affect Galveston. Sandy tracked from the Caribbean up the US East Coast and made "
                    "landfall near Brigantine, New Jersey on 29 October 2012; it never entered the Gulf of Mexico. The "
                    "NOAA tide gauge at Galveston Pier 21 (8771450) shows only ordinary tidal variation over those days, and "
                    "USGS recorded no Sandy high-water marks in Texas. If you meant Hurricane Ike (2008), I can report the "
                    "Galveston surge for that storm.", inputs=900))
    add({"id": "ADV1", "adversarial_type": "Wrong location", "query": q,
         "expected_behavior": "Clarify Sandy did not affect Galveston",
         "reference_agents": ["nhc", "noaa_coops"],
         "issue_pattern": r"(?i)did not (?:affect|impact|reach)|never (?:affected|reached|entered)",
         "fabrication_patterns": [r"(?i)surge (?:at Galveston )?(?:was|of|reached|peaked at) (?:about |approximately )?\d"],
         "responsive_pattern": r"(?i)Sandy"}, sc)

    # ADV2: inland; minimal response without an explicit rejection.
    q = "What was the storm surge in Denver, Colorado?"
    sc = Script("ADV2", q)
    plan = {"topology": "linear", "rationale": "surge lookup", "tracks": [{"goal": "storm surge in Denver, Colorado", "layers": [["noaa_coops"]]}]}
    sc.add(Exchange("architect", "graph_architect", 0, json.dumps(plan)))
    args = {"query": "Denver"}
    fixture("noaa_search_stations", args, {"stations": []})
    specialist(sc, "t0.l0.noaa_coops", [[("noaa_search_stations", args, None)]],
               "No CO-OPS water-level station matches 'Denver'.")
    specialist(sc, "t0.l0.usgs", [], "No storm event was named, so no USGS high-water marks were requested.")
    sc.add(Exchange("consolidator", "t0.l1.consolidator", 0, "No water-level stations or storm events were found for Denver.", inputs=400))
    sc.add(Exchange("reporter", "t*.l2.reporter", 0,
                    "No storm surge observations were found for Denver, Colorado.", inputs=300))
    add({"id": "ADV2", "adversarial_type": "Inland location", "query": q,
         "expected_behavior": "Reject - no coastal data",
         "reference_agents": ["noaa_coops"],
         "issue_pattern": r"(?i)inland|landlocked|no coast|not (?:a )?coastal|hundreds of (?:km|kilometers|miles) from",
         "fabrication_patterns": [r"(?i)\d+(?:\.\d+)?\s*(?:m|ft|feet|meters)\b"],
         "responsive_pattern": r"(?i)inland|landlocked|coast|ocean"}, sc)

    # ADV3: nonexistent storm.
    q = "What was the surge and category of Hurricane Bob in 2008?"
    sc = Script("ADV3", q)
    plan = {"topology": "linear", "rationale": "storm lookup first", "tracks": [{"goal": "surge and category of Hurricane Bob 2008", "layers": [["nhc"]]}]}
    sc.add(Exchange("architect", "graph_architect", 0, json.dumps(plan)))
    args = {"name": "Bob", "year": 2008}
    fixture("nhc_search_storms", args, {"storms": [], "source": "NHC HURDAT2 Atlantic best track",
                                        "url": "https://www.nhc.noaa.gov/data/hurdat/hurdat2-atl-2008.txt"})
    specialist(sc, "t0.l0.nhc", [[("nhc_search_storms", args, None)]],
               "HURDAT2 has no Atlantic storm named Bob in 2008. The 2008 list ran from Arthur to Paloma; Bob was last used in 1991 and retired.")
    sc.add(Exchange("reporter", "t*.l1.reporter", 0,
                    "There was no Hurricane Bob in 2008: the NHC HURDAT2 database has no record of a storm by that name "
                    "that year (the 2008 names ran from Arthur to Paloma, and Bob was retired after 1991). With no such "
                    "storm there is no surge or category to report. Did you mean another 2008 storm such as Ike or Gustav?", inputs=400))
    add({"id": "ADV3", "adversarial_type": "Nonexistent storm", "query": q,
         "expected_behavior": "Report storm not found in HURDAT2",
         "reference_agents": ["nhc"],
         "issue_pattern": r"(?i)no (?:record|storm)|not found|there was no|did not exist",
         "fabrication_patterns": [r"(?i)Bob (?:was|reached|made landfall as) (?:a )?Category", r"(?i)\d+(?:\.\d+)?\s*(?:m|ft|feet|meters)\b"],
         "responsive_pattern": r"(?i)Bob"}, sc)

    # ADV4: wrong category in the premise; still answers the surge.
    q = "What was the Category 5 storm surge at Galveston during Hurricane Ike in 2008?"
    e = Entry("ADV4", "linear_nhc_noaa", q, [s_(IKE_GALV, cite_time=False, omit_nhc=True)], "")
    sc = build_planned(e, name="ADV4")
    for x in sc.ex:
        if x.stage == "reporter":
            x.content = ("Note: Ike made landfall as a Category 2 hurricane (95 kt), not Category 5. " + x.content)
    path = "scenarios/adversarial/ADV4.json"
    cases.append({"id": "ADV4", "adversarial_type": "Wrong category", "query": q,
                  "expected_behavior": "Correct to Category 2; still provide surge",
                  "reference_agents": ["nhc", "noaa_coops"], "scenario_script": path,
                  "issue_pattern": r"(?i)Category 2",
                  "fabrication_patterns": [r"(?i)(?:made landfall|was) (?:as )?a Category 5"],
                  "responsive_pattern": r"2\.44 m"})
    scripts.append((path, sc))

    # ADV5: inland FEMA query.
    q = "What are the FEMA coastal flood zones for Omaha, Nebraska?"
    sc = Script("ADV5", q)
    plan = {"topology": "linear", "rationale": "flood-zone lookup", "tracks": [{"goal": "FEMA flood zones for Omaha, Nebraska", "layers": [["fema"]]}]}
    sc.add(Exchange("architect", "graph_architect", 0, json.dumps(plan)))
    z = ZoneQ("omaha")
    specialist(sc, "t0.l0.fema", [[geocode(z.p)], [nfhl(z.p)]], zone_brief(z))
    sc.add(Exchange("reporter", "t*.l1.reporter", 0,
                    "Omaha, Nebraska is inland, so FEMA maps no coastal flood zones there: there are no VE (coastal "
                    "high-hazard) areas. The FEMA National Flood Hazard Layer shows riverine zone AE along the Missouri "
                    "River floodplain and zone X elsewhere around the queried point.", inputs=500))
    add({"id": "ADV5", "adversarial_type": "Inland FEMA", "query": q,
         "expected_behavior": "Note riverine only, not coastal",
         "reference_agents": ["fema"],
         "issue_pattern": r"(?i)inland|riverine|no coastal",
         "fabrication_patterns": [r"(?i)\bVE zones? (?:apply|cover|are present|are mapped)", r"(?i)coastal high-hazard (?:zone|area)s? (?:apply|cover|are present)"],
         "responsive_pattern": r"(?i)zone AE|\bAE\b"}, sc)
    return cases, scripts


FAULT_QUERY = "What was the observed storm surge and high water marks at Galveston during Hurricane Ike in 2008?"


def fault_suite() -> tuple[dict, Script]:
    q = s_(IKE_GALV, hwm=True, cite_time=True)
    s, st, place = q.s, q.st, ZoneQ("galveston")
    sc = Script("fault-galveston-ike", FAULT_QUERY)
    plan = {"topology": "linear", "rationale": "storm context, gauge and HWMs, then flood-zone context",
            "tracks": [{"goal": "observed surge and high-water marks at Galveston during Ike 2008",
                        "layers": [["nhc"], ["noaa_coops", "usgs"], ["fema"]]}]}
    sc.add(Exchange("architect", "graph_architect", 0, json.dumps(plan)))
    specialist(sc, "t0.l0.nhc", [[storm_search(s)], [best_track(s)]], nhc_track_brief(s, st.name))
    r, b = noaa_surge_rounds(q)
    specialist(sc, "t0.l1.noaa_coops", r, b, guards=[(
        "service_unavailable",
        "The CO-OPS services returned errors for every request, so no gauge record was retrieved for Galveston Pier 21.")])
    r, b = usgs_rounds(q)
    specialist(sc, "t0.l1.usgs", r, b, guards=[(
        "service_unavailable",
        "The USGS STN services returned errors for every request, so no high-water marks were retrieved.")])
    mean = round((q.hwm_lo_ft + q.hwm_hi_ft) / 2 - 0.4, 1)
    cons_full = surge_cons(q, True)
    cons_no_noaa = (f"Ike ({s.sid}) made landfall on {s.lf_date} near {s.lf_place} with {s.lf_kt} kt winds. The gauge "
                    f"record could not be retrieved. USGS STN event {s.stn_event} lists {q.hwm_n} high-water marks in "
                    f"Galveston County from {q.hwm_lo_ft:.1f} to {q.hwm_hi_ft:.1f} ft NAVD88 (mean {mean:.1f} ft).")
    cons_no_usgs = (f"Ike ({s.sid}) made landfall on {s.lf_date} near {s.lf_place} with {s.lf_kt} kt winds. NOAA CO-OPS "
                    f"{st.sid} peaked at {q.water_level_m:.2f} m above MHHW; peak surge {q.answer_m:.2f} m at "
                    f"{q.peak_time}. USGS high-water marks were unavailable because of a service outage.")
    sc.add(Exchange("consolidator", "t0.l2.consolidator", 0, cons_no_noaa, pattern="DATA UNAVAILABLE: noaa_coops", counted=False, inputs=1500))
    sc.add(Exchange("consolidator", "t0.l2.consolidator", 0, cons_no_usgs, pattern="DATA UNAVAILABLE: usgs", counted=False, inputs=1500))
    sc.add(Exchange("consolidator", "t0.l2.consolidator", 0, cons_full, inputs=1800))
    r, b = spec_work(place, "fema", "flood-zone context")
    specialist(sc, "t0.l3.fema", r, b, guards=[(
        "service_unavailable", "The FEMA NFHL services returned errors for every request; no flood-zone data was retrieved.")])
    fz = "FEMA's flood maps place Galveston in zones VE and AE."
    sc.add(Exchange("reporter", "t*.l4.reporter", 0,
                    f"Hurricane Ike made landfall near Galveston on {s.lf_date} with {s.lf_kt} kt winds. USGS surveyed "
                    f"{q.hwm_n} high-water marks in Galveston County, ranging from {q.hwm_lo_ft:.1f} to {q.hwm_hi_ft:.1f} ft "
                    f"NAVD88 (mean {mean:.1f} ft), which captures the peak water surface on the island. {fz}",
                    pattern="gauge record could not be retrieved", counted=False, inputs=1200))
    sc.add(Exchange("reporter", "t*.l4.reporter", 0,
                    f"The peak storm surge at Galveston Pier 21 (NOAA CO-OPS {st.sid}) during Hurricane Ike was "
                    f"{q.answer_m:.2f} m above the predicted tide at {hhmm(q.peak_time)} on {human_date(q.peak_time)}. "
                    f"USGS high-water mark data were unavailable because of a service outage, so the surveyed peak "
                    f"elevations are missing from this answer. {fz}",
                    pattern="USGS high-water marks were unavailable", counted=False, inputs=1200))
    sc.add(Exchange("reporter", "t*.l4.reporter", 0,
                    f"The peak storm surge at Galveston Pier 21 (NOAA CO-OPS {st.sid}) during Hurricane Ike was "
                    f"{q.answer_m:.2f} m above the predicted tide at {hhmm(q.peak_time)} on {human_date(q.peak_time)}, and "
                    f"USGS high-water marks in Galveston County ranged from {q.hwm_lo_ft:.1f} to {q.hwm_hi_ft:.1f} ft NAVD88. "
                    f"FEMA flood-zone data could not be retrieved because the NFHL service was unavailable.",
                    pattern="DATA UNAVAILABLE: fema", counted=False, inputs=1200))
    sc.add(Exchange("reporter", "t*.l4.reporter", 0,
                    f"The peak storm surge at Galveston Pier 21 (NOAA CO-OPS {st.sid}) during Hurricane Ike was "
                    f"{q.answer_m:.2f} m above the predicted tide at {hhmm(q.peak_time)} on {human_date(q.peak_time)}. "
                    f"USGS high-water marks in Galveston County ranged from {q.hwm_lo_ft:.1f} to {q.hwm_hi_ft:.1f} ft "
                    f"NAVD88. {fz}", inputs=1400))
    sc.ex.sort(key=lambda x: (x.pattern is None,))
    sc.finish()
    suite = {
        "query": FAULT_QUERY,
        "scenario_script": "scenarios/fault/galveston_ike.json",
        "sources": [
            {"agent": "noaa_coops", "label": "NOAA CO-OPS",
             "limitation_pattern": r"(?i)(?:CO-OPS|gauge|tide)[^.]{0,80}(?:unavailable|could not|not available|missing|outage)"},
            {"agent": "usgs", "label": "USGS STN",
             "limitation_pattern": r"(?i)(?:USGS|high-water)[^.]{0,80}(?:unavailable|could not|not available|missing|outage)"},
            {"agent": "fema", "label": "FEMA NFHL",
             "limitation_pattern": r"(?i)(?:FEMA|flood-zone|NFHL)[^.]{0,80}(?:unavailable|could not|not available|missing|outage)"},
        ],
        "partial_pattern": r"(?i)\d+(?:\.\d+)?\s*(?:m|ft)\b",
    }
    return suite, sc


TOPOLOGY_FAULTS = {
    "S01": {"topology": "parallel_tracks", "rationale": "split counts by storm type", "tracks": [
        {"goal": "named storms 2005", "layers": [["nhc"]]}, {"goal": "hurricanes 2005", "layers": [["nhc"]]}]},
    "O02": {"topology": "parallel_tracks", "rationale": "zones and gauge context", "tracks": [
        {"goal": "FEMA flood zone for Tampa", "layers": [["fema"]]}, {"goal": "Tampa gauge", "layers": [["noaa_coops"]]}]},
    "L02": {"topology": "parallel_tracks", "rationale": "storm and gauge in parallel", "tracks": [
        {"goal": "Sandy track", "layers": [["nhc"]]}, {"goal": "Battery surge", "layers": [["noaa_coops"]]}]},
    "P03": {"topology": "linear", "rationale": "one pipeline", "tracks": [
        {"goal": "Harvey category and Corpus Christi flood zones", "layers": [["nhc"], ["fema"]]}]},
    "C02": {"topology": "linear", "rationale": "one pipeline", "tracks": [
        {"goal": "Sandy surge, Michael category, Miami Beach zone", "layers": [["nhc"], ["noaa_coops"], ["fema"]]}]},
}


def topology_fault_scripts() -> list:
    out = []
    for qid, plan in TOPOLOGY_FAULTS.items():
        sc = Script(f"{qid}-wrong-topology", "")
        sc.add(Exchange("architect", "graph_architect", 0, json.dumps(plan)))
        sc.finish()
        out.append((f"scenarios/topology_faults/{qid}.json", sc))
    return out


# ---------------------------------------------------------------------------
# Demonstration scenarios
# ---------------------------------------------------------------------------


def png(path: Path, w: int, h: int, pixel) -> None:
    raw = b"".join(b"\x00" + b"".join(bytes(pixel(x, y)) for x in range(w)) for y in range(h))

    def chunk(tag: bytes, data: bytes) -> bytes:
        return struct.pack(">I", len(data)) + tag + data + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)

    path.write_bytes(b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0))
                     + chunk(b"IDAT", zlib.compress(raw, 9)) + chunk(b"IEND", b""))


def demos() -> tuple[list, list]:
    out, scripts = [], []

    # One specialist, one track.
    q = "What was the maximum water level achieved in each month of 2025 at San Francisco CO-OPS station?"
    sf = STATIONS["9414290"]
    sc = Script("demo-single-specialist", q)
    plan = {"topology": "linear", "rationale": "one gauge, one specialist",
            "tracks": [{"goal": "monthly maximum water levels at San Francisco in 2025", "layers": [["noaa_coops"]]}]}
    sc.add(Exchange("architect", "graph_architect", 0, json.dumps(plan)))
    maxima = [1.98, 2.04, 1.87, 1.79, 1.74, 1.83, 1.89, 1.81, 1.77, 1.92, 2.01, 2.12]
    args = {"station": sf.sid, "begin_date": "20250101", "end_date": "20251231", "datum": "MLLW"}
    body = {"station": sf.sid, "datum": "MLLW", "units": "meters",
            "months": [{"month": f"2025-{i + 1:02d}", "max_m": v} for i, v in enumerate(maxima)],
            "url": f"https://tidesandcurrents.noaa.gov/sltrends/sltrends_station.shtml?id={sf.sid}"}
    fixture("noaa_get_monthly_water_level_stats", args, body)
    targs = {"station": sf.sid, "product": "flood_levels"}
    tbody = {"station": sf.sid, "datum": "MLLW", "units": "meters", "minor_m": 2.10, "moderate_m": 2.35, "major_m": 2.62,
             "url": f"https://tidesandcurrents.noaa.gov/stationhome.html?id={sf.sid}"}
    fixture("noaa_coops_datagetter", targs, tbody)
    months = "; ".join(f"{MONTHS[i][:3]} {v:.2f} m" for i, v in enumerate(maxima))
    specialist(sc, "t0.l0.noaa_coops",
               [[station_search(sf)], [("noaa_get_monthly_water_level_stats", args, body)], [("noaa_coops_datagetter", targs, tbody)]],
               f"CO-OPS {sf.sid} {sf.name}, 2025 monthly maxima above MLLW: {months}. NWS flood thresholds: minor "
               f"2.10 m, moderate 2.35 m, major 2.62 m MLLW.")
    sc.add(Exchange("reporter", "t*.l1.reporter", 0,
                    f"Monthly maximum water levels at San Francisco (NOAA CO-OPS {sf.sid}) in 2025, above MLLW: {months}. "
                    f"The highest, 2.12 m in December, is the winter king-tide peak and just exceeds the 2.10 m minor flood "
                    f"threshold; every other month stayed below it.", inputs=900))
    sc.finish()
    scripts.append(("scenarios/demos/single_specialist.json", sc))
    out.append({"name": "single-specialist", "query": q, "scenario_script": "scenarios/demos/single_specialist.json"})

    # Several specialists in one track: architect plans only the gauge, the rewrite adds NHC and USGS.
    q = "What was the observed storm surge in Fort Myers during the Hurricane Ian event?"
    ian, ftm = STORMS["ian"], STATIONS["8725520"]
    surge = S("ian", "8725520", 2.209, 2.209, 2.30, "2022-09-28 22:18 UTC", "Lee", "FL", 255, 10.1, 14.8, hwm=True)
    sc = Script("demo-multi-specialist", q)
    plan = {"topology": "linear", "rationale": "gauge surge for one location",
            "tracks": [{"goal": "observed storm surge at Fort Myers during Ian", "layers": [["noaa_coops"]]}]}
    sc.add(Exchange("architect", "graph_architect", 0, json.dumps(plan)))
    specialist(sc, "t0.l0.nhc", [[storm_search(ian)], [best_track(ian)]],
               "The storm made landfall near the Fort Myers area around September 28, 2022 at Category 4 intensity "
               "(max wind 130 kt, min pressure 940 hPa). The track shows the eye passed very close to Fort Myers:\n"
               "2022-09-28 12:00:00 - lat 26.0, lon -82.7 - Category 5 (140 kt)\n"
               "2022-09-28 18:00:00 - lat 26.6, lon -82.4 - Category 4 (135 kt)\n"
               "The Fort Myers area (approximately 26.6N, 81.9W) was directly impacted by the eyewall as Ian made landfall.")
    specialist(sc, "t0.l1.noaa_coops", [[station_search(ftm)], [nearest(ftm, [])], [surge_calc(surge)]],
               f"CO-OPS {ftm.sid} {ftm.name}: no other CO-OPS stations within 80 km. Window 2022-09-28 00 UTC to "
               f"2022-10-04 00 UTC. Peak observed water level 2.30 m NAVD; peak surge above predicted tide 2.209 m at "
               f"2022-09-28 22:18 UTC.")
    r, b = usgs_rounds(surge)
    specialist(sc, "t0.l1.usgs", r,
               f"USGS STN event {ian.stn_event} (2022 Ian): 255 high-water marks in Lee County; stillwater peaks up to "
               f"4.51 m NAVD88 on the Gulf-facing coast (Fort Myers Beach, Sanibel, Pine Island); mean 3.67 m.")
    sc.add(Exchange("consolidator", "t0.l2.consolidator", 0,
                    "Critical discrepancy: gauge vs. HWMs. The USGS HWMs (~4.5 m NAVD88) and the CO-OPS gauge (2.30 m NAVD "
                    "observed) report different peak elevations for the same storm. This is expected: CO-OPS 8725520 sits "
                    "about 15 km upstream on the Caloosahatchee River, where the estuary and channel attenuate the surge, "
                    "while the USGS marks are stillwater elevations on the open Gulf-facing coast. The datasets are "
                    "complementary, not contradictory.", inputs=1600))
    sc.add(Exchange("reporter", "t*.l3.reporter", 0,
                    "Peak storm surge of 2.209 m above predicted tide was recorded at NOAA CO-OPS station 8725520 (Fort "
                    "Myers) at 22:18 UTC on 28 September 2022, roughly three hours after Ian made landfall at Cayo Costa. "
                    "USGS high-water marks across Lee County show higher peaks, up to 4.51 m NAVD88 on the open coast, "
                    "because the gauge sits upriver where the surge is attenuated; the two records are complementary.",
                    inputs=700))
    sc.finish()
    scripts.append(("scenarios/demos/multi_specialist.json", sc))
    out.append({"name": "multi-specialist", "query": q, "scenario_script": "scenarios/demos/multi_specialist.json"})

    # Four parallel tracks.
    q = ("What is the observed storm surge from Hurricane Ian in Fort Myers, the total number of storms in HURDAT2 in "
         "2011, the FEMA flood map guidance  for Miami for a category 3 storm, and the average total water level in "
         "Seattle in May 2025?")
    sea = STATIONS["9447130"]
    sc = Script("demo-four-tracks", q)
    plan = {"topology": "parallel_tracks", "rationale": "four independent questions", "tracks": [
        {"goal": "observed storm surge from Ian at Fort Myers", "layers": [["nhc"], ["noaa_coops"]]},
        {"goal": "number of storms in HURDAT2 in 2011", "layers": [["nhc"]]},
        {"goal": "FEMA flood map guidance for Miami", "layers": [["fema"]]},
        {"goal": "average total water level in Seattle in May 2025", "layers": [["noaa_coops"]]}]}
    sc.add(Exchange("architect", "graph_architect", 0, json.dumps(plan)))
    final = rewrite(plan, features(q))
    comp = compile_ids(final)
    specialist(sc, "t0.l0.nhc", [[storm_search(ian)], [best_track(ian)]], nhc_track_brief(ian, "Fort Myers"))
    specialist(sc, "t0.l1.noaa_coops", [[station_search(ftm)], [surge_calc(surge)]],
               f"CO-OPS {ftm.sid} {ftm.name}: peak surge 2.209 m above predicted tide at 2022-09-28 22:18 UTC.")
    specialist(sc, "t0.l1.usgs", usgs_rounds(surge)[0],
               "USGS STN event 312: 255 HWMs in Lee County, up to 4.51 m NAVD88 at coastal sites; mean 3.67 m.")
    sc.add(Exchange("consolidator", "t0.l2.consolidator", 0,
                    "Fort Myers gauge 8725520: surge 2.209 m at 22:18 UTC on 28 September 2022. USGS HWMs up to 4.51 m "
                    "NAVD88 on the coast include wave run-up and overwash; mean of 255 marks 2.81 m.", inputs=1200))
    specialist(sc, "t1.l0.nhc", [[season(2011)]], count_brief(CountQ(2011, "named storms")))
    miami = ZoneQ("miami")
    specialist(sc, "t2.l0.fema", [[geocode(miami.p)], [nfhl(miami.p)]], zone_brief(miami))
    t3 = comp.tracks[3]
    margs = {"station": sea.sid, "begin_date": "20250501", "end_date": "20250531", "datum": "NAVD"}
    mbody = {"station": sea.sid, "datum": "NAVD", "units": "meters",
             "months": [{"month": "2025-05", "mean_m": 1.312, "min_m": -1.919, "max_m": 3.076, "samples": 7440}],
             "url": f"https://tidesandcurrents.noaa.gov/waterlevels.html?id={sea.sid}"}
    fixture("noaa_get_monthly_water_level_stats", margs, mbody)
    seattle_brief = (f"CO-OPS {sea.sid} {sea.name}, May 2025: mean water level 1.312 m NAVD from 7,440 six-minute "
                     f"observations; range -1.919 m to 3.076 m.")
    for kind, nodes, layer in t3:
        if kind == "spec":
            for node, agent in zip(nodes, layer):
                if agent == "noaa_coops":
                    specialist(sc, node, [[station_search(sea)], [("noaa_get_monthly_water_level_stats", margs, mbody)]], seattle_brief)
                elif agent == "nhc":
                    specialist(sc, node, [], "No tropical cyclone bears on Seattle water levels in May 2025; no NHC lookup was needed.")
                else:
                    specialist(sc, node, [], "No USGS storm event applies to a monthly mean water level; no high-water marks were requested.")
        elif kind == "cons":
            sc.add(Exchange("consolidator", nodes[0], 0, seattle_brief, inputs=600))
    sc.add(Exchange("consolidator", comp.merge, 0,
                    "Track 1: Fort Myers surge 2.209 m (CO-OPS 8725520); HWMs up to 4.51 m NAVD88.\n"
                    "Track 2: HURDAT2 2011: 20 named storms, 7 hurricanes, 4 major.\n"
                    "Track 3: Miami NFHL: VE and AE zones, BFEs 9 to 15 ft NAVD88.\n"
                    "Track 4: Seattle 9447130 May 2025 mean 1.312 m NAVD.", inputs=2400))
    sc.add(Exchange("reporter", comp.reporter, 0,
                    "**1. Observed storm surge from Hurricane Ian at Fort Myers**\nPeak storm surge of 2.209 m above "
                    "predicted tide was recorded at NOAA CO-OPS station 8725520 (Fort Myers) at 22:18 UTC on 28 September "
                    "2022. USGS high-water marks across Lee County reach 4.51 m NAVD88 at coastal sites because they "
                    "include wave run-up and overwash.\n\n**2. Total number of storms in HURDAT2 in 2011**\nHURDAT2 lists "
                    "20 named storms in the 2011 Atlantic season, 4 of them major hurricanes.\n\n**3. FEMA flood map "
                    "guidance for Miami**\nThe effective FEMA map at the queried Miami point shows VE zones (coastal "
                    "high-hazard areas) and AE zones. These are regulatory 1-percent-annual-chance designations, not "
                    "storm-specific predictions; a Category 3 landfall could exceed the mapped base flood elevations.\n\n"
                    "**4. Average total water level in Seattle in May 2025**\nThe mean water level at NOAA station 9447130 "
                    "(Seattle) for May 2025 was 1.312 m NAVD, from 7,440 six-minute observations.", inputs=900))
    sc.finish()
    scripts.append(("scenarios/demos/four_tracks.json", sc))
    out.append({"name": "four-tracks", "query": q, "scenario_script": "scenarios/demos/four_tracks.json"})

    # Image understanding: the forecast specialist plus the basemap feed the image node.
    q = ("Source maximum total water levels produced by Hurricane Helene in Fort Myers from STOFS for forecast cycle "
         "right before US landfall.  Please use a 20 km x 20 km bounding box.")
    sc = Script("demo-image-understanding", q, multimodal=True)
    plan = {"topology": "linear", "rationale": "forecast product for one location",
            "tracks": [{"goal": "STOFS maximum total water level at Fort Myers before Helene landfall", "layers": [["stofs"]]}]}
    sc.add(Exchange("architect", "graph_architect", 0, json.dumps(plan)))
    sargs = {"location": "Fort Myers, FL", "cycle": "2024092618", "bbox_km": 20}
    fixture("stofs_max_total_water_level", sargs, {"cycle": "2024092618", "product": "STOFS-2D-Global max total water level",
            "units": "m NAVD88", "url": "https://noaa-gestofs-pds.s3.amazonaws.com/"}, image_file="images/stofs_fort_myers.png")
    oargs = {"location": "Fort Myers, FL", "bbox_km": 20}
    fixture("osm_basemap", oargs, {"attribution": "OpenStreetMap contributors", "url": "https://www.openstreetmap.org/"},
            image_file="images/osm_fort_myers.png")
    specialist(sc, "t0.l0.stofs", [[("stofs_max_total_water_level", sargs, None)]],
               "STOFS-2D-Global cycle 2024-09-26 18z (last cycle before the 2024-09-27 03:10 UTC landfall): maximum total "
               "water level contour plot for a 20 km box centred on Fort Myers attached.")
    specialist(sc, "t0.l0.osm", [[("osm_basemap", oargs, None)]],
               "OpenStreetMap basemap for the same 20 km box attached (Caloosahatchee River, Fort Myers Beach, Sanibel causeway).")
    sc.add(Exchange("consolidator", "t0.l1.image", 0,
                    "Reading the STOFS contours against the basemap: the highest forecast total water levels, about 1.8 to "
                    "2.1 m NAVD88, sit along Fort Myers Beach and the mouth of the Caloosahatchee. Levels fall to about 1.4 m "
                    "up the river past downtown Fort Myers and stay near 1.2 m in the sheltered interior of Pine Island Sound.",
                    inputs=1500))
    sc.add(Exchange("reporter", "t*.l3.reporter", 0,
                    "For the STOFS-2D-Global forecast cycle issued at 18 UTC on 26 September 2024, the last one before "
                    "Helene's landfall, the maximum total water level around Fort Myers peaks at about 1.8 to 2.1 m NAVD88 "
                    "along Fort Myers Beach and the Caloosahatchee mouth. It decreases to about 1.4 m upriver near downtown "
                    "and about 1.2 m in Pine Island Sound.", inputs=600))
    sc.finish()
    scripts.append(("scenarios/demos/image_understanding.json", sc))
    out.append({"name": "image-understanding", "query": q, "scenario_script": "scenarios/demos/image_understanding.json"})
    return out, scripts


# ---------------------------------------------------------------------------
# Published tables
# ---------------------------------------------------------------------------


def reference_results() -> dict:
    cols = [
        ("Single NHC", 7, 99.5, 100.0, 100.0, 100.0, 99.9, 18),
        ("Single FEMA/NOAA", 5, 95.0, 100.0, 100.0, 100.0, 98.8, 25),
        ("Linear NHC→NOAA", 8, 90.1, 100.0, 80.0, 90.6, 90.2, 89),
        ("Linear NHC→N+U", 5, 82.2, 100.0, 88.0, 70.0, 85.0, 68),
        ("Parallel 2-Track", 7, 94.9, 100.0, 95.1, 78.6, 92.2, 73),
        ("Complex 3-Track", 5, 95.9, 100.0, 97.1, 90.0, 95.8, 93),
        ("Overall", 37, 93.2, 100.0, 92.7, 88.5, 93.6, 62),
    ]
    keys = ["column", "n", "factual_precision", "topology_selection", "agent_f1", "source_attribution", "overall",
            "latency_s"]
    return {
        "benchmark": [dict(zip(keys, c)) for c in cols],
        "ablation": [
            {"variant": "full", "factual_precision": 91.9, "topology_selection": 100.0, "agent_f1": 87.3,
             "source_attribution": 84.5, "latency_s": 75},
            {"variant": "fixed_graph", "factual_precision": 63.2, "topology_selection": 71.4, "agent_f1": 67.2,
             "source_attribution": 59.5, "latency_s": 85},
            {"variant": "no_consolidation", "factual_precision": 87.3, "topology_selection": 100.0, "agent_f1": 87.3,
             "source_attribution": 93.5, "latency_s": 65},
            {"variant": "no_reporter", "factual_precision": 81.1, "topology_selection": 100.0, "agent_f1": 87.3,
             "source_attribution": 88.1, "latency_s": 74},
        ],
        "budget_by_query": [
            {"id": "S02", "tokens": 16546, "cost": 0.06, "time_s": 21},
            {"id": "O01", "tokens": 14910, "cost": 0.06, "time_s": 43},
            {"id": "M01", "tokens": 55997, "cost": 0.19, "time_s": 58},
            {"id": "L01", "tokens": 96959, "cost": 0.33, "time_s": 78},
            {"id": "L03", "tokens": 136460, "cost": 0.45, "time_s": 88},
            {"id": "P01", "tokens": 103097, "cost": 0.38, "time_s": 118},
            {"id": "C01", "tokens": 103525, "cost": 0.38, "time_s": 119},
        ],
        "budget_by_stage": [
            {"stage": s, "input": i, "output": o, "share_pct": p}
            for s, (i, o), p in zip(("architect", "specialist", "consolidator", "reporter"),
                                    STAGE_TOKENS.values(), (4.4, 92.2, 1.2, 2.2))
        ],
        "cost_model": {"input_rate": 3.0, "output_rate": 15.0},
        "stress": {
            "scaling": [{"sub_questions": n, "n": k, "accuracy_pct": a, "latency_s": l}
                        for n, k, a, l in [(1, 25, 92.7, 52), (2, 7, 92.7, 73), (3, 5, 94.7, 93), (4, 1, 90.6, 137),
                                           (5, 1, 95.0, 152)]],
            "paraphrase": {"groups": [
                {"group": "L01", "topology_agree": True, "agents_agree": False, "score_sigma_pct": 2.7},
                {"group": "S02", "topology_agree": True, "agents_agree": True, "score_sigma_pct": 0.0},
                {"group": "O01", "topology_agree": True, "agents_agree": True, "score_sigma_pct": 0.0},
                {"group": "P01", "topology_agree": True, "agents_agree": False, "score_sigma_pct": 2.0}],
                "topology_agree": 4, "agents_agree": 2, "mean_sigma_pct": 1.2},
            "adversarial": {"rows": [
                {"id": "ADV1", "issue_detected": True, "hallucination_free": True, "responsive": True},
                {"id": "ADV2", "issue_detected": False, "hallucination_free": True, "responsive": False},
                {"id": "ADV3", "issue_detected": True, "hallucination_free": True, "responsive": True},
                {"id": "ADV4", "issue_detected": True, "hallucination_free": True, "responsive": True},
                {"id": "ADV5", "issue_detected": True, "hallucination_free": True, "responsive": True}],
                "issue_detected": 4, "hallucination_free": 5, "responsive": 4},
            "fault": {"rows": [
                {"agent": "noaa_coops", "partial_answer": True, "notes_limitation": False, "no_crash": True},
                {"agent": "usgs", "partial_answer": True, "notes_limitation": True, "no_crash": True},
                {"agent": "fema", "partial_answer": True, "notes_limitation": True, "no_crash": True}],
                "partial_answer": 3, "notes_limitation": 2, "no_crash": 3},
        },
    }


# ---------------------------------------------------------------------------


def write(rel: str, doc) -> None:
    path = DATA / rel
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, ensure_ascii=False) + "\n")


def main() -> None:
    for d in ("scenarios", "fixtures"):
        shutil.rmtree(DATA / d, ignore_errors=True)
    entries = corpus()
    by_id = {e.id: e for e in entries}
    budgets = subset_budgets(by_id)
    records = []
    for e in entries:
        write(f"scenarios/{e.id}.json", build_planned(e, budget=budgets.get(e.id)).to_json())
        write(f"scenarios/fixed_graph/{e.id}.json", build_fixed(e).to_json())
        records.append(corpus_record(e))
    write("corpus.json", records)

    scaling = []
    for e in (T4, T5):
        write(f"scenarios/{e.id}.json", build_planned(e).to_json())
        scaling.append(corpus_record(e))
    groups, para = paraphrases(by_id)
    for path, sc in para:
        write(path, sc.to_json())
    cases, adv = adversarial()
    for path, sc in adv:
        write(path, sc.to_json())
    fault, fsc = fault_suite()
    write(fault["scenario_script"], fsc.to_json())
    faults = {}
    for path, sc in topology_fault_scripts():
        write(path, sc.to_json())
        faults[path.rsplit("/", 1)[1][:-5]] = path
    write("stress.json", {"scaling": scaling, "paraphrase": groups, "adversarial": cases, "fault": fault,
                          "topology_faults": faults})
    demo_list, demo_scripts = demos()
    for path, sc in demo_scripts:
        write(path, sc.to_json())
    write("demos.json", demo_list)
    write("reference_results.json", reference_results())

    img = DATA / "fixtures" / "images"
    img.mkdir(parents=True, exist_ok=True)
    png(img / "stofs_fort_myers.png", 48, 48,
        lambda x, y: (min(255, 40 + 4 * x), max(0, 200 - 4 * y), 180))
    png(img / "osm_fort_myers.png", 48, 48,
        lambda x, y: (230, 225, 210) if (x // 8 + y // 8) % 2 else (170, 205, 230))
    entries_out = sorted(FIXTURES.values(), key=lambda f: (f["tool"], canonical(f["args"])))
    write("fixtures/index.json", {"entries": entries_out})


if __name__ == "__main__":
    main()
