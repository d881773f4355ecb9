import numpy as np
from django.conf import settings

from math_pose.kinematics import joint_positions, root_transform_matrix

from .errors import accel_error, camera_error, foot_points, foot_sliding, mpjpe_sequence, root_error
from .models import METRICS, TABLE_COLUMNS, SequenceMetrics
from .success import build_trace, success_check


def score_sequence(model, sim, clip, states, fell=False, failsafe_resets=0, success_rule=None,
                   mount_offset=settings.CAMERA_MOUNT_OFFSET, mount_rotation=settings.CAMERA_MOUNT_ROTATION):
    """SequenceMetrics of simulated `states` against the first len(states) frames of `clip`.

    `success_rule` names the action whose success test applies instead of the
    clip's own; imitation evaluation passes "walk" so only falls count against
    success. The reported action is always the clip's label.
    """
    count = len(states)
    poses = [s.q for s in states]
    reference = clip.poses[:count]
    joints = np.stack([joint_positions(model, p) for p in poses])
    reference_joints = np.stack([joint_positions(model, p) for p in reference])
    mean_mpjpe, per_joint = mpjpe_sequence(joints, reference_joints)

    camera = 0.0
    if clip.camera is not None and "head" in model.roles:
        camera = camera_error(model, poses, clip.camera[:count], mount_offset, mount_rotation)
    sliding = 0.0
    if "feet" in model.roles:
        sliding = foot_sliding(np.stack([foot_points(model, p) for p in poses]))

    label = clip.action or "walk"
    trace = build_trace(model, sim.scene, states, clip.object_name, fell, clip.desired_end)
    names = [model.names[b] for b in model.articulated]
    return SequenceMetrics(
        clip=clip.name,
        action=label,
        success=success_check(success_rule or label, trace),
        root_error=root_error(
            np.stack([root_transform_matrix(p).matrix for p in poses]),
            np.stack([root_transform_matrix(p).matrix for p in reference]),
        ),
        mpjpe=mean_mpjpe,
        accel_error=accel_error(joints, reference_joints) if count >= 3 else 0.0,
        foot_sliding=sliding,
        penetration=float(np.mean([sim.measure_penetration(s) for s in states])),
        camera_error=camera,
        failsafe_resets=failsafe_resets,
        frames=count,
        fell=fell,
        per_joint_mpjpe={name: float(v) for name, v in zip(names, per_joint)},
    )


def summarize(reports):
    """Mean and population std of every aggregate metric across reports (one per seed)."""
    rows = [report.aggregate() for report in reports]
    return {
        name: {"mean": float(np.mean([r[name] for r in rows])), "std": float(np.std([r[name] for r in rows]))}
        for name in METRICS
    }


def _table(header, rows):
    widths = [max(len(str(row[i])) for row in [header, *rows]) for i in range(len(header))]
    lines = ["  ".join(str(cell).rjust(width) for cell, width in zip(row, widths)) for row in [header, *rows]]
    return "\n".join(lines)


def format_report(report):
    """Per-clip rows then the mean row, columns in table order."""
    header = ["clip", "action", *(label for _, label in TABLE_COLUMNS), "resets"]
    rows = [
        [s.clip, s.action, *(f"{getattr(s, name):.3f}" for name, _ in TABLE_COLUMNS), str(s.failsafe_resets)]
        for s in report.sequences
    ]
    mean = report.aggregate()
    rows.append(["mean", "", *(f"{mean[name]:.3f}" for name, _ in TABLE_COLUMNS), f"{mean['failsafe_resets']:.2f}"])
    lines = [_table(header, rows)]
    by_action = report.success_by_action()
    if by_action:
        lines.append("success by action: " + ", ".join(f"{a} {rate:.3f}" for a, rate in by_action.items()))
    return "\n".join(lines)


def format_summary(summary, runs):
    header = ["runs", *(label for _, label in TABLE_COLUMNS)]
    row = [str(runs), *(f"{summary[name]['mean']:.3f} ± {summary[name]['std']:.3f}" for name, _ in TABLE_COLUMNS)]
    return _table(header, [row])


def format_per_joint(report):
    rows = [[joint, f"{value:.3f}"] for joint, value in report.per_joint().items()]
    return _table(["joint", "E_mpjpe"], rows)
