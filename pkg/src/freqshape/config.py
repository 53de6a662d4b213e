"""JSON scenario documents: schema, validation, overrides, built-ins and conversion to :class:`Scenario`.

A document either spells out ``network``/``units``/``loads``/``events`` or
names a ``builtin`` (with optional ``builtin_args``) that is expanded on load.
Top-level ``integrator``, ``analyses``, ``reduced`` and ``name`` entries of the
document take precedence over the expanded built-in.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, fields

import jsonschema

from . import scenarios as builtin_scenarios
from .components import GforParams, Load, LoadParams, SgParams, Unit
from .network import Branch, Bus, Network
from .timedomain import Event, Scenario

SCHEMA_VERSION = 1
DT_RATIO = 5.0  # dt must not exceed the smallest time constant divided by this

# dataclass field -> document key (units in the name)
SG_KEYS = {
    "S_rated": "S_rated_MVA", "H": "H_s", "D": "D_pu", "Xd_transient": "Xd_transient_pu",
    "Ra": "Ra_pu", "R_f_sg": "R_f_sg_pu", "tau_turb": "tau_turb_s", "T_emf": "T_emf_s",
    "T_w": "T_w_s", "Kavr": "Kavr_pu", "tau_avr": "tau_avr_s", "P0_ref": "P0_ref_pu",
    "f0_ref": "f0_ref_Hz", "V_ref": "V_ref_pu",
}
GFOR_KEYS = {
    "S_rated": "S_rated_MVA", "Rc": "Rc_pu", "Lc": "Lc_pu", "Cac": "Cac_pu", "R_tr": "R_tr_pu",
    "X_tr": "X_tr_pu", "tau_cc": "tau_cc_s", "kpv": "kpv_pu", "kiv": "kiv_pu_per_s",
    "R_f_gfor": "R_f_gfor_pu", "tau_p_gfor": "tau_p_gfor_s", "k_qv": "k_qv_pu", "tau_q": "tau_q_s",
    "r_v": "r_v_pu", "x_v": "x_v_pu", "k_ff": "k_ff_pu", "P_star": "P_star_pu",
    "Q_star": "Q_star_pu", "V_star": "V_star_pu", "f0": "f0_Hz", "f_ref": "f_ref_Hz",
}
LOAD_KEYS = {"P": "P_MW", "Q": "Q_Mvar", "v_min": "v_min_pu", "tau_v": "tau_v_s"}


def _numbers(keys):
    return {k: {"type": "number"} for k in keys}


_ID = {"type": ["string", "integer"]}
_DOC_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "builtin": {"type": "string"},
        "builtin_args": {"type": "object"},
        "network": {
            "type": "object", "additionalProperties": False, "required": ["buses"],
            "properties": {
                "s_base_MVA": {"type": "number", "exclusiveMinimum": 0},
                "f0_Hz": {"type": "number", "exclusiveMinimum": 0},
                "buses": {"type": "array", "minItems": 1, "items": {
                    "type": "object", "additionalProperties": False, "required": ["id"],
                    "properties": {"id": _ID, **_numbers(("base_kV", "g_sh_pu", "b_sh_pu"))}}},
                "branches": {"type": "array", "items": {
                    "type": "object", "additionalProperties": False,
                    "required": ["from", "to", "r_pu", "x_pu"],
                    "properties": {"from": _ID, "to": _ID,
                                   **_numbers(("r_pu", "x_pu", "b_pu")),
                                   "tap": {"type": "number", "exclusiveMinimum": 0}}}},
            },
        },
        "units": {"type": "array", "items": {
            "type": "object", "additionalProperties": False, "required": ["name", "kind", "bus"],
            "properties": {
                "name": {"type": "string"}, "kind": {"enum": ["sg", "gfor"]}, "bus": _ID,
                "P_MW": {"type": "number"}, "V_pu": {"type": "number", "exclusiveMinimum": 0},
                "params": {"type": "object",
                           "propertyNames": {"enum": sorted(set(SG_KEYS.values()) | set(GFOR_KEYS.values()))},
                           "additionalProperties": {"type": ["number", "null"]}},
            }}},
        "loads": {"type": "array", "items": {
            "type": "object", "additionalProperties": False, "required": ["name", "bus", "kind"],
            "properties": {"name": {"type": "string"}, "bus": _ID,
                           "kind": {"enum": ["constant_power", "constant_impedance"]},
                           **_numbers(LOAD_KEYS.values())}}},
        "events": {"type": "array", "items": {
            "type": "object", "additionalProperties": False, "required": ["t_s", "kind"],
            "properties": {"t_s": {"type": "number"},
                           "kind": {"enum": ["load_step", "unit_trip", "setpoint"]},
                           "bus": _ID, "dP_MW": {"type": "number"}, "dQ_Mvar": {"type": "number"},
                           "target": {"type": "string"}, "field": {"type": "string"},
                           "value": {"type": "number"}}}},
        "integrator": {
            "type": "object", "additionalProperties": False,
            "properties": {"dt_s": {"type": "number", "exclusiveMinimum": 0},
                           "t_end_s": {"type": "number", "exclusiveMinimum": 0},
                           "record_every": {"type": "integer", "minimum": 1}}},
        "analyses": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "metrics": {"type": "object", "additionalProperties": False, "properties": {
                    "t_dist_s": {"type": "number"}, "frequency_channel": {"type": "string"},
                    "power_channel": {"type": "string"},
                    "windows_s": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                    "rocof_window_s": {"type": "number", "exclusiveMinimum": 0}}},
                "sweep": {"type": "object", "additionalProperties": False, "required": ["set", "values"],
                          "properties": {"set": {"type": "string"}, "values": {"type": "array"}}},
                "modes": {"type": "object", "additionalProperties": False, "properties": {
                    "h": {"type": "number", "exclusiveMinimum": 0}}},
            },
        },
        "reduced": {
            "type": "object", "additionalProperties": False, "required": ["model"],
            "properties": {
                "model": {"enum": ["sg", "gfol", "gfor"]},
                "form": {"enum": ["expanded", "legacy"]},
                "alphas": {"type": "array", "items": {"type": "number"}},
                "betas": {"type": "array", "items": {"type": "number"}},
                **_numbers(("H_s", "R_f_sg_pu", "tau_turb_s", "f0_Hz", "R_f_conv_pu", "tau_p_s",
                            "deltaP_pu", "t_end_s", "dt_s", "rocof_window_s")),
            },
        },
    },
}


class ConfigError(ValueError):
    """Document failed validation; ``diagnostics`` holds every problem found."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics) or "invalid document")


@dataclass(frozen=True)
class Diagnostic:
    path: str
    message: str
    code: str = "schema"

    def __str__(self):
        return f"{self.path or '<root>'}: {self.message} [{self.code}]"


# --------------------------------------------------------------------------- built-ins

REDUCED_DEFAULTS = {"H_s": 5.0, "R_f_sg_pu": 0.05, "tau_turb_s": 5.0, "f0_Hz": 50.0,
                    "R_f_conv_pu": 0.05, "deltaP_pu": 0.1, "t_end_s": 60.0, "dt_s": 0.005,
                    "rocof_window_s": 0.5}
TAU_SWEEP = [0.01, 0.1, 1.0, 5.0]
_GRID = [round(0.1 * k, 10) for k in range(10)]


def _case_extra(alpha, args):
    tau = args.get("tau_p_gfor", 0.1)
    return {
        "analyses": {"metrics": {"t_dist_s": args.get("t_step", 1.0), "frequency_channel": "f_sg",
                                 "power_channel": "dP_vsc_MW"},
                     "sweep": {"set": "builtin_args.tau_p_gfor", "values": list(TAU_SWEEP)}},
        "reduced": {"model": "gfor", "alphas": [alpha], "tau_p_s": tau, **REDUCED_DEFAULTS},
    }


def _mm6_extra(args):
    alpha = args.get("alpha", 0.8)
    return {
        "analyses": {"metrics": {"t_dist_s": args.get("t_trip", 1.0), "frequency_channel": "f_vsc2"
                                 if alpha > 0 else "f_sg2", "power_channel": "dP_vsc2_MW"
                                 if alpha > 0 else "dP_sg2_MW"},
                     "sweep": {"set": "builtin_args.alpha", "values": [0.0, 0.2, 0.5, 0.8]}},
        "reduced": {"model": "gfor", "alphas": [alpha], "tau_p_s": args.get("tau_p_gfor", 0.1),
                    **REDUCED_DEFAULTS},
    }


BUILTINS = {
    "case1": (builtin_scenarios.case1, lambda a: _case_extra(0.2, a)),
    "case2": (builtin_scenarios.case2, lambda a: _case_extra(0.8, a)),
    "multimachine6": (builtin_scenarios.multimachine6, _mm6_extra),
    "gfol_sweep": (None, lambda a: {"reduced": {
        "model": "gfol", "alphas": list(_GRID), "betas": _GRID + [1.0], "tau_p_s": 0.25,
        **REDUCED_DEFAULTS, **a}}),
    "gfor_alpha": (None, lambda a: {"reduced": {
        "model": "gfor", "alphas": [0.0, 0.2, 0.4, 0.6, 0.8, 1.0], "tau_p_s": 0.1,
        **REDUCED_DEFAULTS, **a}}),
}


def builtin_document(name: str) -> dict:
    if name not in BUILTINS:
        raise ConfigError([Diagnostic("builtin", f"unknown built-in {name!r}; choose from "
                                                 f"{', '.join(sorted(BUILTINS))}", "unknown")])
    return {"schema_version": SCHEMA_VERSION, "builtin": name}


def expand(doc: dict) -> dict:
    """Replace a ``builtin`` reference by the full document it stands for."""
    if "builtin" not in doc:
        return copy.deepcopy(doc)
    name = doc["builtin"]
    if name not in BUILTINS:
        raise ConfigError([Diagnostic("builtin", f"unknown built-in {name!r}", "unknown")])
    factory, extra = BUILTINS[name]
    args = dict(doc.get("builtin_args", {}))
    try:
        out = scenario_to_document(factory(**args)) if factory else \
            {"schema_version": SCHEMA_VERSION, "name": name}
        ext = extra(args)
    except (TypeError, ValueError) as exc:
        raise ConfigError([Diagnostic("builtin_args", str(exc), "builtin")]) from None
    out.update(ext)
    for key, val in doc.items():
        if key in ("builtin", "builtin_args"):
            continue
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            merged = copy.deepcopy(out[key])
            merged.update(copy.deepcopy(val))
            out[key] = merged
        else:
            out[key] = copy.deepcopy(val)
    out.setdefault("name", name)
    return out


# --------------------------------------------------------------------------- overrides

def parse_assignment(text: str):
    """``key.path=value`` with a JSON value; bare words are taken as strings."""
    if "=" not in text:
        raise ConfigError([Diagnostic(text, "override must look like key=value", "override")])
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _children(node, seg):
    """Resolve one path segment to a list of ``(container, key)`` slots."""
    if isinstance(node, dict):
        return [(node, seg)]
    if isinstance(node, list):
        if seg == "*":
            return [(node, i) for i in range(len(node))]
        if seg.lstrip("-").isdigit():
            return [(node, int(seg))]
        hits = [(node, i) for i, item in enumerate(node)
                if isinstance(item, dict) and str(item.get("name", item.get("id"))) == seg]
        return hits
    return []


def set_path(doc: dict, path: str, value) -> int:
    """Assign ``value`` at a dotted ``path``; list items are addressed by index, name/id or ``*``.

    A trailing key under a wildcard is only set where it already exists.
    Returns the number of slots written; raises :class:`ConfigError` if none.
    """
    segs = path.split(".")
    slots = [(None, None, doc)]
    for depth, seg in enumerate(segs):
        last = depth == len(segs) - 1
        nxt = []
        for _, _, node in slots:
            for cont, key in _children(node, seg):
                if isinstance(cont, list) and not -len(cont) <= key < len(cont):
                    continue
                if last:
                    nxt.append((cont, key, None))
                    continue
                if isinstance(cont, dict) and key not in cont:
                    cont[key] = {}
                nxt.append((cont, key, cont[key]))
        slots = nxt
    wild = "*" in segs
    n = 0
    for cont, key, _ in slots:
        if wild and isinstance(cont, dict) and key not in cont:
            continue
        cont[key] = copy.deepcopy(value)
        n += 1
    if n == 0:
        raise ConfigError([Diagnostic(path, "override path matches nothing", "override")])
    return n


def apply_overrides(doc: dict, assignments) -> dict:
    """Expand built-ins and apply ``(path, value)`` pairs; ``builtin_args.*`` goes in before expansion."""
    doc = copy.deepcopy(doc)
    early = [(k, v) for k, v in assignments if k.split(".")[0] == "builtin_args"]
    late = [(k, v) for k, v in assignments if k.split(".")[0] != "builtin_args"]
    diags = []
    for k, v in early:
        if "builtin" not in doc:
            diags.append(Diagnostic(k, "builtin_args given but the document names no built-in",
                                    "override"))
            continue
        doc.setdefault("builtin_args", {})
        set_path(doc, k, v)
    if diags:
        raise ConfigError(diags)
    out = expand(doc)
    for k, v in late:
        try:
            set_path(out, k, v)
        except ConfigError as exc:
            diags.extend(exc.diagnostics)
    if diags:
        raise ConfigError(diags)
    return out


def config_hash(doc: dict) -> str:
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# --------------------------------------------------------------------------- conversion

def _params_to_doc(params, keys):
    return {keys[f.name]: getattr(params, f.name) for f in fields(params)
            if getattr(params, f.name) is not None}


def scenario_to_document(sc: Scenario) -> dict:
    net = sc.network
    doc = {
        "schema_version": SCHEMA_VERSION,
        "name": sc.name,
        "network": {
            "s_base_MVA": net.s_base, "f0_Hz": net.f0,
            "buses": [{"id": b.id, "base_kV": b.base_kv, "g_sh_pu": b.g_sh, "b_sh_pu": b.b_sh}
                      for b in net.buses],
            "branches": [{"from": br.from_bus, "to": br.to_bus, "r_pu": br.r, "x_pu": br.x,
                          "b_pu": br.b, "tap": br.tap} for br in net.branches],
        },
        "units": [{"name": u.name, "kind": u.kind, "bus": u.bus, "P_MW": u.P_mw, "V_pu": u.V_pu,
                   "params": _params_to_doc(u.params, SG_KEYS if u.kind == "sg" else GFOR_KEYS)}
                  for u in sc.units],
        "loads": [{"name": ld.name, "bus": ld.bus, "kind": ld.params.kind,
                   **{LOAD_KEYS[k]: getattr(ld.params, k) for k in LOAD_KEYS}} for ld in sc.loads],
        "events": [],
        "integrator": {"dt_s": sc.dt, "t_end_s": sc.t_end, "record_every": sc.record_every},
    }
    for ev in sc.events:
        e = {"t_s": ev.t, "kind": ev.kind}
        if ev.kind == "load_step":
            e.update(bus=ev.bus, dP_MW=ev.dP_mw, dQ_Mvar=ev.dQ_mvar)
        elif ev.kind == "unit_trip":
            e["target"] = ev.target
        else:
            e.update(target=ev.target, field=ev.field, value=ev.value)
        doc["events"].append(e)
    return doc


def _params_from_doc(cls, keys, block):
    inv = {v: k for k, v in keys.items()}
    unknown = sorted(set(block) - set(inv))
    if unknown:
        raise ValueError(f"unknown parameter(s) {', '.join(unknown)} for {cls.__name__}")
    return cls(**{inv[k]: v for k, v in block.items()})


def document_to_scenario(doc: dict) -> Scenario:
    """Build a :class:`Scenario` from an expanded, validated document."""
    n = doc["network"]
    net = Network(
        buses=[Bus(b["id"], base_kv=b.get("base_kV", 1.0), g_sh=b.get("g_sh_pu", 0.0),
                   b_sh=b.get("b_sh_pu", 0.0)) for b in n["buses"]],
        branches=[Branch(br["from"], br["to"], br["r_pu"], br["x_pu"], br.get("b_pu", 0.0),
                         br.get("tap", 1.0)) for br in n.get("branches", [])],
        s_base=n.get("s_base_MVA", 100.0), f0=n.get("f0_Hz", 50.0),
    )
    units = []
    for u in doc.get("units", []):
        cls, keys = (SgParams, SG_KEYS) if u["kind"] == "sg" else (GforParams, GFOR_KEYS)
        units.append(Unit(u["name"], u["bus"], _params_from_doc(cls, keys, u.get("params", {})),
                          P_mw=u.get("P_MW", 0.0), V_pu=u.get("V_pu", 1.0)))
    loads = [Load(ld["name"], ld["bus"], LoadParams(
        ld["kind"], **{k: ld[v] for k, v in LOAD_KEYS.items() if v in ld}))
        for ld in doc.get("loads", [])]
    events = [Event(e["t_s"], e["kind"], bus=e.get("bus"), dP_mw=e.get("dP_MW", 0.0),
                    dQ_mvar=e.get("dQ_Mvar", 0.0), target=e.get("target"), field=e.get("field"),
                    value=e.get("value"))
              for e in sorted(doc.get("events", []), key=lambda e: e["t_s"])]
    integ = doc.get("integrator", {})
    return Scenario(net, units, loads, events, t_end=integ.get("t_end_s", 10.0),
                    dt=integ.get("dt_s", 1e-4), record_every=integ.get("record_every", 10),
                    name=doc.get("name", "scenario"))


# --------------------------------------------------------------------------- validation

def _json_path(err) -> str:
    return ".".join(str(p) for p in err.absolute_path)


def validate_document(doc) -> list:
    """Every schema and physics problem in an expanded document (empty list when valid)."""
    if not isinstance(doc, dict):
        return [Diagnostic("", "document must be a JSON object")]
    validator = jsonschema.Draft202012Validator(_DOC_SCHEMA)
    diags = [Diagnostic(_json_path(e), e.message)
             for e in sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))]
    if diags:
        return diags
    if "network" not in doc:
        if "reduced" not in doc:
            diags.append(Diagnostic("network", "document needs a network or a reduced section",
                                    "missing"))
        return diags + _validate_reduced(doc)
    bus_ids = [b["id"] for b in doc["network"]["buses"]]
    if len(set(bus_ids)) != len(bus_ids):
        diags.append(Diagnostic("network.buses", "duplicate bus ids", "duplicate"))
    buses = set(bus_ids)
    for k, br in enumerate(doc["network"].get("branches", [])):
        for end in ("from", "to"):
            if br[end] not in buses:
                diags.append(Diagnostic(f"network.branches.{k}.{end}", f"unknown bus {br[end]!r}",
                                        "reference"))
        if br["r_pu"] == 0 and br["x_pu"] == 0:
            diags.append(Diagnostic(f"network.branches.{k}", "zero-impedance branch", "physics"))
    units = doc.get("units", [])
    if not units:
        diags.append(Diagnostic("units", "at least one generating unit is required", "missing"))
    names = [u["name"] for u in units]
    if len(set(names)) != len(names):
        diags.append(Diagnostic("units", "duplicate unit names", "duplicate"))
    taus = []
    for k, u in enumerate(units):
        path = f"units.{k}"
        if u["bus"] not in buses:
            diags.append(Diagnostic(f"{path}.bus", f"unknown bus {u['bus']!r}", "reference"))
        pr = u.get("params", {})
        droop = "R_f_sg_pu" if u["kind"] == "sg" else "R_f_gfor_pu"
        if droop in pr and not pr[droop] > 0:
            diags.append(Diagnostic(f"{path}.params.{droop}", "droop must be positive", "physics"))
        cls, keys = (SgParams, SG_KEYS) if u["kind"] == "sg" else (GforParams, GFOR_KEYS)
        try:
            par = _params_from_doc(cls, keys, pr)
            taus.extend(par.time_constants)
        except (TypeError, ValueError) as exc:
            if not (droop in pr and not pr[droop] > 0):
                diags.append(Diagnostic(f"{path}.params", str(exc), "physics"))
    load_names = [ld["name"] for ld in doc.get("loads", [])]
    if len(set(load_names)) != len(load_names):
        diags.append(Diagnostic("loads", "duplicate load names", "duplicate"))
    for k, ld in enumerate(doc.get("loads", [])):
        if ld["bus"] not in buses:
            diags.append(Diagnostic(f"loads.{k}.bus", f"unknown bus {ld['bus']!r}", "reference"))
        tau_v = ld.get("tau_v_s", 0.02)
        if tau_v < 0:
            diags.append(Diagnostic(f"loads.{k}.tau_v_s", "must be non-negative", "physics"))
        elif ld["kind"] == "constant_power" and tau_v > 0:
            taus.append(tau_v)
    integ = doc.get("integrator", {})
    dt, t_end = integ.get("dt_s", 1e-4), integ.get("t_end_s", 10.0)
    if taus and dt > min(taus) / DT_RATIO:
        diags.append(Diagnostic("integrator.dt_s", f"dt={dt:g} s is too large for the smallest "
                                f"time constant {min(taus):g} s (limit {min(taus) / DT_RATIO:g} s)",
                                "dt-too-large"))
    for k, e in enumerate(doc.get("events", [])):
        path = f"events.{k}"
        if not 0.0 <= e["t_s"] <= t_end:
            diags.append(Diagnostic(f"{path}.t_s", f"event time {e['t_s']:g} s outside "
                                    f"[0, {t_end:g}] s", "range"))
        if e["kind"] == "load_step":
            if e.get("bus") not in buses:
                diags.append(Diagnostic(f"{path}.bus", f"unknown bus {e.get('bus')!r}", "reference"))
        elif e.get("target") not in names:
            diags.append(Diagnostic(f"{path}.target", f"unknown unit {e.get('target')!r}",
                                    "reference"))
        elif e["kind"] == "setpoint" and (e.get("field") is None or e.get("value") is None):
            diags.append(Diagnostic(path, "setpoint events need field and value", "missing"))
    return diags + _validate_reduced(doc)


def _validate_reduced(doc) -> list:
    red = doc.get("reduced")
    if red is None:
        return []
    diags = []
    for key in ("H_s", "R_f_sg_pu", "tau_turb_s", "f0_Hz", "R_f_conv_pu", "tau_p_s", "t_end_s", "dt_s"):
        if key in red and not red[key] > 0:
            diags.append(Diagnostic(f"reduced.{key}", "must be positive", "physics"))
    hi = 1.0 if red["model"] == "gfor" else 1.0 - 1e-15
    for k, a in enumerate(red.get("alphas", [])):
        if not 0.0 <= a <= hi:
            diags.append(Diagnostic(f"reduced.alphas.{k}", f"alpha {a:g} outside its range", "range"))
    for k, b in enumerate(red.get("betas", [])):
        if not 0.0 <= b <= 1.0:
            diags.append(Diagnostic(f"reduced.betas.{k}", f"beta {b:g} outside [0, 1]", "range"))
    return diags


def load_document(source) -> dict:
    """Read a JSON file (path or file object)."""
    try:
        if hasattr(source, "read"):
            return json.load(source)
        with open(source) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError([Diagnostic("", f"invalid JSON: {exc}", "parse")]) from None
    except OSError as exc:
        raise ConfigError([Diagnostic("", f"cannot read scenario file: {exc}", "io")]) from None


def resolve(doc: dict, overrides=()) -> dict:
    """Expand, override and validate; raises :class:`ConfigError` with all diagnostics."""
    if not isinstance(doc, dict):
        raise ConfigError([Diagnostic("", "document must be a JSON object")])
    if "builtin" in doc and doc["builtin"] not in BUILTINS:
        builtin_document(doc["builtin"])
    if "builtin" in doc:
        pre = jsonschema.Draft202012Validator(_DOC_SCHEMA)
        errs = [Diagnostic(_json_path(e), e.message) for e in pre.iter_errors(doc)]
        if errs:
            raise ConfigError(errs)
    out = apply_overrides(doc, overrides)
    diags = validate_document(out)
    if diags:
        raise ConfigError(diags)
    return out
