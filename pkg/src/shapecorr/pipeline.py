"""End-to-end instance generation.

For each enumerated pair: load both shapes from the network (dataset scale
applied), optionally area-normalize, remesh to a random target resolution,
apply the partiality setting (none / source-only / overlap-constrained
pair), rotate around z, and assemble the ground-truth correspondence
between the emitted discretisations. Everything is a pure function of
(manifest, config, global_seed).
"""

from __future__ import annotations

import hashlib
import os
import shutil
import struct
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import geometry as geo
from .config import GenerationConfig
from .corrio import load_correspondence, save_correspondence
from .decimate import RemeshCache, remesh_with_correspondence
from .meshes import DenseCorrespondence, Mesh, UNMATCHED
from .meshio import load_mesh, save_colored_ply, save_mesh
from .network import (compose, correspondence_between, project_template_pair,
                      shortest_path)
from .pairs import enumerate_pairs
from .scanning import (REGIME_ALPHA, OverlapStats, RaycastCache,
                       generate_partial, generate_partial_pair)

# role bytes for per-instance seed streams
ROLE_REMESH_X = 0
ROLE_REMESH_Y = 1
ROLE_PARTIALITY = 2
ROLE_ROTATE_X = 3
ROLE_ROTATE_Y = 4


def derive_seed(global_seed, index, role):
    """Stable 64-bit stream seed from (global_seed, instance index, role)."""
    h = hashlib.sha256(struct.pack("<qqB", int(global_seed), int(index),
                                   int(role))).digest()
    return int.from_bytes(h[:8], "little")


def derived_rng(global_seed, index, role):
    return np.random.default_rng(derive_seed(global_seed, index, role))


@dataclass
class MatchingInstance:
    setting: str
    shape_x: Mesh
    shape_y: Mesh
    gt: DenseCorrespondence
    transforms: dict  # per-shape: rotation_z angle, scale note
    overlap: OverlapStats | None
    provenance: dict

    def __post_init__(self):
        if self.setting == "partial_partial" and self.overlap is None:
            raise ValueError("P2P instance requires overlap stats")
        if self.setting != "partial_partial" and self.overlap is not None:
            raise ValueError("overlap stats only valid for P2P")
        self.gt.validate_against(self.shape_x, self.shape_y)


def _prepare_shape(net, shape_id, config, rng, remesh_cache):
    """Load (scale comes from the network node), optionally area-normalize,
    optionally remesh. Returns (emitted-so-far mesh, corr to network mesh)."""
    mesh = net.mesh(shape_id)
    if config.normalize_area:
        mesh = geo.normalize_area(mesh)
    if config.remesh:
        res = remesh_with_correspondence(mesh, config.count_range, rng,
                                         cache=remesh_cache)
        return res.mesh, res.to_original, mesh, res
    from .meshes import identity_correspondence
    return mesh, identity_correspondence(mesh), mesh, None


def _emitted_to_emitted(corr_net, back_x, net_mesh_x, net_mesh_y,
                        emitted_y):
    """remeshed-X -> remeshed-Y correspondence through the network."""
    to_net_y = compose(back_x, corr_net, net_mesh_x, net_mesh_y)
    if emitted_y is net_mesh_y:
        return to_net_y
    fwd_y = project_template_pair(net_mesh_y, emitted_y)
    return compose(to_net_y, fwd_y, net_mesh_y, emitted_y)


def _restrict_to_partials(corr, px, py, id_x, id_y):
    """Cut a full-resolution correspondence down to partial discretisations.

    Source rows are re-indexed through px's parent vertices; target entries
    landing outside py's parent faces become UNMATCHED, the rest re-index
    into the partial's face numbering.
    """
    faces = corr.faces[px.parent_vertex] if px is not None else corr.faces
    weights = corr.weights[px.parent_vertex] if px is not None \
        else corr.weights
    faces = faces.copy()
    weights = weights.copy()
    if py is not None:
        # py.parent_face is sorted; position = face index in the partial
        pos = np.searchsorted(py.parent_face, faces)
        pos_ok = (pos < len(py.parent_face)) & \
            (py.parent_face[np.minimum(pos, len(py.parent_face) - 1)] == faces)
        keep = (faces != UNMATCHED) & pos_ok
        faces = np.where(keep, np.minimum(pos, len(py.parent_face) - 1),
                         UNMATCHED)
        weights[~keep] = 0.0
    return DenseCorrespondence(id_x, id_y, faces, weights)


def generate_instance(spec, net, config, raycast_cache=None,
                      remesh_cache=None):
    """Fully deterministic instance for one pair spec."""
    seed = config.global_seed
    try:
        return _generate_instance(spec, net, config, raycast_cache,
                                  remesh_cache, seed)
    except Exception as exc:
        raise RuntimeError(
            f"instance {spec.index} ({spec.id_x} / {spec.id_y}): {exc}"
        ) from exc


def _generate_instance(spec, net, config, raycast_cache, remesh_cache, seed):
    emit_x, back_x, net_x, res_x = _prepare_shape(
        net, spec.id_x, config, derived_rng(seed, spec.index, ROLE_REMESH_X),
        remesh_cache)
    emit_y, back_y, net_y, res_y = _prepare_shape(
        net, spec.id_y, config, derived_rng(seed, spec.index, ROLE_REMESH_Y),
        remesh_cache)

    corr_net = correspondence_between(net, spec.id_x, spec.id_y)
    full_corr = _emitted_to_emitted(corr_net, back_x, net_x, net_y, emit_y)

    px = py = None
    overlap = None
    if config.setting == "partial_full":
        rng = derived_rng(seed, spec.index, ROLE_PARTIALITY)
        px = generate_partial(emit_x, rng, resolution=config.resolution,
                              cache=raycast_cache)
    elif config.setting == "partial_partial":
        corr_net_back = correspondence_between(net, spec.id_y, spec.id_x)
        back_full = _emitted_to_emitted(corr_net_back, back_y, net_y, net_x,
                                        emit_x)
        rng = derived_rng(seed, spec.index, ROLE_PARTIALITY)
        params = {"alpha": REGIME_ALPHA[config.cam_pos_regime],
                  "min_overlap": config.min_overlap,
                  "max_overlap": config.max_overlap,
                  "m": config.n_cam_pos}
        px, py, overlap = generate_partial_pair(
            emit_x, emit_y, full_corr, back_full, params, rng,
            resolution=config.resolution, cache=raycast_cache)

    gt = _restrict_to_partials(full_corr, px, py,
                               emit_x.id if px is None else px.mesh.id,
                               emit_y.id if py is None else py.mesh.id)
    shape_x = px.mesh if px is not None else emit_x
    shape_y = py.mesh if py is not None else emit_y

    angles = {"x": 0.0, "y": 0.0}
    if config.one_axis_rotation:
        angles["x"] = float(derived_rng(seed, spec.index, ROLE_ROTATE_X)
                            .uniform(0.0, 2 * np.pi))
        angles["y"] = float(derived_rng(seed, spec.index, ROLE_ROTATE_Y)
                            .uniform(0.0, 2 * np.pi))
        shape_x = geo.rotate_z(shape_x, angles["x"])
        shape_y = geo.rotate_z(shape_y, angles["y"])

    path = shortest_path(net, spec.id_x, spec.id_y)
    provenance = {
        "index": spec.index, "split": spec.split, "dataset": spec.dataset,
        "id_x": spec.id_x, "id_y": spec.id_y,
        "category_x": "", "category_y": "",
        "path_length": len(path) - 1, "global_seed": seed,
        # areas of the emitted-resolution full shapes; evaluation normalizes
        # partial-target errors by sqrt(area of the full counterpart)
        "area_full_x": geo.surface_area(emit_x),
        "area_full_y": geo.surface_area(emit_y),
        "remesh_target_x": res_x.target_count if res_x else -1,
        "remesh_achieved_x": res_x.achieved_count if res_x else -1,
        "remesh_target_y": res_y.target_count if res_y else -1,
        "remesh_achieved_y": res_y.achieved_count if res_y else -1,
    }
    transforms = {"rotation_z_x": angles["x"], "rotation_z_y": angles["y"],
                  "scale_x": net.nodes[spec.id_x].scale,
                  "scale_y": net.nodes[spec.id_y].scale}
    return MatchingInstance(config.setting, shape_x, shape_y, gt,
                            transforms, overlap, provenance)


# --- serialization ---

def instance_dirname(spec):
    return f"{spec.split}_{spec.index:06d}"


def write_instance(instance, directory, store_vis=False):
    """Atomic write: everything lands in a temp dir that is renamed into
    place only when complete."""
    directory = Path(directory)
    directory.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=directory.name + ".tmp.",
                                dir=directory.parent))
    try:
        save_mesh(instance.shape_x, tmp / "x.ply")
        save_mesh(instance.shape_y, tmp / "y.ply")
        save_correspondence(instance.gt, tmp / "gt.corr", binary=True)
        if store_vis:
            write_vis(instance, tmp)
        meta = {"setting": instance.setting}
        meta.update(instance.transforms)
        meta.update(instance.provenance)
        if instance.overlap is not None:
            meta["overlap_x_to_y"] = instance.overlap.frac_x_to_y
            meta["overlap_y_to_x"] = instance.overlap.frac_y_to_x
            meta["overlap_iterations"] = instance.overlap.iterations_used
            meta["overlap_within_range"] = instance.overlap.within_range
        lines = [f"{k}={_meta_fmt(v)}" for k, v in meta.items()]
        (tmp / "meta.txt").write_text("\n".join(lines) + "\n")
        os.replace(tmp, directory)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def _meta_fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def read_meta(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        if line:
            k, v = line.split("=", 1)
            out[k] = v
    return out


def write_vis(instance, directory):
    """Color-transfer PLYs: target colored by normalized position, source
    colored through the ground-truth correspondence (gray = unmatched)."""
    directory = Path(directory)
    y = instance.shape_y
    span = y.vertices.max(axis=0) - y.vertices.min(axis=0)
    span[span == 0] = 1.0
    cy = (y.vertices - y.vertices.min(axis=0)) / span
    save_colored_ply(y, cy, directory / "vis_y.ply")
    pos = geo.evaluate_correspondence(instance.gt, y)
    cx = np.full((instance.shape_x.n_vertices, 3), 0.5)
    m = instance.gt.matched
    cx[m] = (pos[m] - y.vertices.min(axis=0)) / span
    save_colored_ply(instance.shape_x, np.clip(cx, 0.0, 1.0),
                     directory / "vis_x.ply")


def load_instance(directory):
    directory = Path(directory)
    meta = read_meta(directory / "meta.txt")
    shape_x = load_mesh(directory / "x.ply")
    shape_y = load_mesh(directory / "y.ply")
    gt = load_correspondence(directory / "gt.corr")
    return shape_x, shape_y, gt, meta


def run_generation(config, net, split_manifest, output_dir, limit=None,
                   log=None):
    """Generate all instances for config.split into output_dir.

    Resumable: completed instance directories are skipped. Failures are
    logged and the run continues. Returns the list of written (or already
    present) instance directory names.
    """
    log = log or (lambda msg: None)
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    config.to_file(output_dir / "config.echo")
    raycast_cache = RaycastCache(
        output_dir / "cache" / "raycast",
        use=config.use_precomputed_partial_raycasting,
        update=config.update_precomputed_raycasting)
    remesh_cache = RemeshCache(
        output_dir / "cache" / "remesh",
        use=config.use_precompute_remeshing,
        update=config.update_precomputed_remeshed)
    specs = enumerate_pairs(split_manifest, config)
    if limit is not None:
        specs = specs[:limit]
    done = []
    failed = 0
    for spec in specs:
        name = instance_dirname(spec)
        dest = output_dir / name
        if dest.exists():
            done.append(name)
            log(f"skip {name} (complete)")
            continue
        t0 = time.monotonic()
        try:
            inst = generate_instance(spec, net, config,
                                     raycast_cache=raycast_cache,
                                     remesh_cache=remesh_cache)
            write_instance(inst, dest, store_vis=config.store_vis)
        except Exception as exc:
            failed += 1
            log(f"FAIL {name}: {exc}")
            continue
        done.append(name)
        log(f"done {name} in {time.monotonic() - t0:.2f}s")
    manifest_path = output_dir / "instances.manifest"
    manifest_path.write_text("\n".join(done) + ("\n" if done else ""))
    log(f"wrote {len(done)} instances ({failed} failed) to {output_dir}")
    return done
