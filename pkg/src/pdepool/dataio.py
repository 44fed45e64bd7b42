"""Dataset and report persistence.

Datasets are a JSON header plus a raw little-endian float32 payload in
(trajectory, time, x, channel) order; the header embeds both its own hash and
the payload hash, so tampering and truncation are detected on load. Writes
are atomic (write to a temp file, then rename): a partially written file is
never readable as valid. Narrowing float64 field data to float32 on save is
the only lossy step in the pipeline.
"""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from .core import Grid, ICParams, PDEParams, SimInput, TimeAxis, TrajectoryBatch
from .generators import make_sim_input

_MAGIC = b"PDPDATA1\n"


class DatasetFormatError(ValueError):
    pass


def _candidate_record(inp: SimInput) -> dict:
    ic = inp.ic_params
    return {
        "uid": int(inp.uid),
        "pde": {"values": inp.pde_params.values.tolist(),
                "normed": inp.pde_params.normed.tolist()},
        "ic": {
            "amplitudes": ic.amplitudes.tolist(),
            "wave_numbers": ic.wave_numbers.tolist(),
            "phases": ic.phases.tolist(),
            "window_flag": bool(ic.window_flag),
            "x_left": float(ic.x_left),
            "x_right": float(ic.x_right),
            "sign_flip": bool(ic.sign_flip),
            "normed": ic.normed.tolist(),
        },
    }


def _candidate_from_record(rec: dict, grid: Grid) -> SimInput:
    ic = rec["ic"]
    ic_params = ICParams(
        amplitudes=ic["amplitudes"], wave_numbers=ic["wave_numbers"],
        phases=ic["phases"], window_flag=ic["window_flag"],
        x_left=ic["x_left"], x_right=ic["x_right"],
        sign_flip=ic["sign_flip"], normed=ic["normed"],
    )
    pde = PDEParams(values=rec["pde"]["values"], normed=rec["pde"]["normed"])
    return make_sim_input(ic_params, pde, grid, uid=rec["uid"])


def _header_digest(header: dict) -> str:
    probe = dict(header)
    probe["header_sha256"] = ""
    return hashlib.sha256(json.dumps(probe, sort_keys=True).encode()).hexdigest()


def save_dataset(traj: TrajectoryBatch, inputs: list[SimInput], path: str,
                 dtype: str = "<f4") -> None:
    """Datasets default to the float32 interchange format; internal checkpoints
    pass dtype='<f8' so resumed runs see bit-identical state."""
    if traj.n_traj != len(inputs):
        raise ValueError(f"{traj.n_traj} trajectories but {len(inputs)} candidate records")
    if dtype not in ("<f4", "<f8"):
        raise ValueError(f"unsupported payload dtype {dtype!r}")
    payload = np.ascontiguousarray(traj.data, dtype=dtype).tobytes()
    header = {
        "schema_version": 1,
        "dtype": dtype,
        "order": "traj,t,x,c",
        "n_traj": traj.n_traj,
        "n_c": traj.n_c,
        "grid": {"n_x": traj.grid.n_x, "length": traj.grid.length},
        "time": {"n_t": traj.time.n_t, "t_final": traj.time.t_final},
        "candidates": [_candidate_record(i) for i in inputs],
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "header_sha256": "",
    }
    header["header_sha256"] = _header_digest(header)
    blob = json.dumps(header, sort_keys=True).encode()
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        fh.write(payload)
    os.replace(tmp, path)


def load_dataset(path: str):
    """Returns (TrajectoryBatch, inputs). Field data comes back float64 with
    exactly the float32 stored values; candidate ICs are re-realized in full
    precision from their parameters."""
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise DatasetFormatError(f"{path}: not a dataset file")
        n = int.from_bytes(fh.read(8), "little")
        try:
            header = json.loads(fh.read(n).decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DatasetFormatError(f"{path}: corrupt header ({exc})") from exc
        payload = fh.read()
    if header.get("header_sha256") != _header_digest(header):
        raise DatasetFormatError(f"{path}: header hash mismatch")
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise DatasetFormatError(f"{path}: payload hash mismatch (truncated or corrupt)")
    shape = (header["n_traj"], header["time"]["n_t"], header["grid"]["n_x"], header["n_c"])
    dtype = header.get("dtype", "<f4")
    if dtype not in ("<f4", "<f8"):
        raise DatasetFormatError(f"{path}: unsupported payload dtype {dtype!r}")
    expected = np.dtype(dtype).itemsize * int(np.prod(shape))
    if len(payload) != expected:
        raise DatasetFormatError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    data = np.frombuffer(payload, dtype=dtype).reshape(shape).astype(np.float64)
    grid = Grid(header["grid"]["n_x"], header["grid"]["length"],
                header["grid"]["length"] / header["grid"]["n_x"])
    time = TimeAxis(header["time"]["n_t"], header["time"]["t_final"])
    traj = TrajectoryBatch(data=data, grid=grid, time=time)
    inputs = [_candidate_from_record(rec, grid) for rec in header["candidates"]]
    return traj, inputs


def write_json_atomic(obj: dict, path: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def read_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)
