"""Pose recovery: Procrustes alignment and the direct constraint solve."""

import numpy as np
import pytest

import offset6d as o6
from offset6d.errors import DegenerateConfigurationError, ModeMismatchError
from offset6d.geometry import rotation_defect
from offset6d.solver import ConditionFlag

from conftest import default_intrinsics, random_pose, small_scene_spec

K = default_intrinsics()


def encoded_scene(index: int, seed: int = 11, spec=None):
    spec = spec or small_scene_spec(seed=seed)
    scene = o6.render_scene(spec, index)
    obs = scene.observation
    ref = o6.ref_mean_visible(obs.depth, obs.mask, obs.intrinsics)
    enc = o6.encode_input(obs, ref)
    tgt = o6.encode_targets(obs, ref)
    return scene, enc, tgt, ref


class TestProcrustes:
    def test_identity_alignment(self, rng):
        pts = rng.uniform(-1, 1, (30, 3))
        report = o6.solve_procrustes(pts, pts)
        np.testing.assert_allclose(report.pose.rotation, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(report.pose.translation, np.zeros(3), atol=1e-12)
        assert report.residual_rms < 1e-12
        assert report.condition_flag is ConditionFlag.WELL_POSED
        assert report.point_count == 30

    def test_generate_then_recover(self, rng):
        for _ in range(50):
            pose = random_pose(rng)
            obj = rng.uniform(-0.2, 0.2, (40, 3))
            cam = o6.transform_points(pose, obj)
            report = o6.solve_procrustes(cam, obj)
            assert o6.rotation_geodesic_error(report.pose, pose) < 1e-6
            assert np.linalg.norm(report.pose.translation - pose.translation) < 1e-8

    def test_collinear_points_degenerate(self):
        obj = np.outer(np.linspace(0, 1, 5), [1.0, 2.0, 3.0])
        cam = obj + [0.1, 0.0, 0.5]
        with pytest.raises(DegenerateConfigurationError):
            o6.solve_procrustes(cam, obj)

    def test_too_few_points(self):
        with pytest.raises(DegenerateConfigurationError):
            o6.solve_procrustes(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_coplanar_points_are_fine(self, rng):
        # Any 3 non-collinear points are coplanar; rotation is still unique.
        pose = random_pose(rng)
        obj = np.array([[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [0.0, 0.1, 0.0], [0.1, 0.1, 0.0]])
        cam = o6.transform_points(pose, obj)
        report = o6.solve_procrustes(cam, obj)
        assert o6.rotation_geodesic_error(report.pose, pose) < 1e-9

    def test_equivariance(self, rng):
        # Moving all camera points by G turns the answer into G o pose.
        for _ in range(20):
            pose = random_pose(rng)
            motion = random_pose(rng)
            obj = rng.uniform(-0.2, 0.2, (25, 3))
            cam = o6.transform_points(pose, obj)
            moved = o6.transform_points(motion, cam)
            report = o6.solve_procrustes(moved, obj)
            expected = o6.compose(motion, pose)
            assert o6.rotation_geodesic_error(report.pose, expected) < 1e-9
            assert np.linalg.norm(report.pose.translation - expected.translation) < 1e-9

    def test_noisy_rotation_still_valid(self, rng):
        pose = random_pose(rng)
        obj = rng.uniform(-0.2, 0.2, (40, 3))
        cam = o6.transform_points(pose, obj) + rng.normal(0, 0.01, (40, 3))
        report = o6.solve_procrustes(cam, obj)
        assert rotation_defect(report.pose.rotation) <= 1e-9

    def test_pre_projection_block_close_on_clean_data(self, rng):
        pose = random_pose(rng)
        obj = rng.uniform(-0.2, 0.2, (40, 3))
        report = o6.solve_procrustes(o6.transform_points(pose, obj), obj)
        np.testing.assert_allclose(report.pre_projection_rotation, pose.rotation, atol=1e-9)


class TestConstraintSolve:
    def test_noiseless_recovery(self):
        for i in range(20):
            scene, enc, tgt, ref = encoded_scene(i)
            assert len(enc) >= 20
            report = o6.solve_from_constraints(enc, tgt.delta_abc, ref)
            gt = scene.observation.gt_pose
            assert o6.rotation_geodesic_error(report.pose, gt) < 1e-6
            assert np.linalg.norm(report.pose.translation - gt.translation) < 1e-8
            assert report.residual_rms < 1e-10

    def test_agrees_with_procrustes(self):
        for i in range(10):
            scene, enc, tgt, ref = encoded_scene(i, seed=13)
            obs = scene.observation
            report = o6.solve_from_constraints(enc, tgt.delta_abc, ref)
            cam = o6.backproject_pixels(enc.us, enc.vs, obs.depth.values[enc.vs, enc.us], obs.intrinsics)
            obj = o6.inverse_transform_points(obs.gt_pose, cam)
            baseline = o6.solve_procrustes(cam, obj)
            assert o6.rotation_geodesic_error(report.pose, baseline.pose) < 1e-8
            assert np.linalg.norm(report.pose.translation - baseline.pose.translation) < 1e-8

    def test_uniform_depth_is_degenerate(self):
        # Fronto-parallel plane: dd = 0 kills the translation column and
        # flattens the offsets; the pose cannot be pinned down.
        depth = np.zeros((40, 40))
        mask = np.zeros((40, 40), dtype=bool)
        depth[10:30, 10:30] = 1.0
        mask[10:30, 10:30] = True
        obs = o6.SceneObservation(
            o6.DepthMap(depth), o6.InstanceMask(mask), K, gt_pose=o6.RigidPose.identity()
        )
        ref = o6.ref_mean_visible(obs.depth, obs.mask, K)
        assert ref.d0 == 1.0
        enc = o6.encode_input(obs, ref)
        tgt = o6.encode_targets(obs, ref)
        with pytest.raises(DegenerateConfigurationError):
            o6.solve_from_constraints(enc, tgt.delta_abc, ref)

    def test_too_few_pixels(self):
        scene, enc, tgt, ref = encoded_scene(0)
        import dataclasses

        small = dataclasses.replace(
            enc,
            us=enc.us[:4], vs=enc.vs[:4],
            delta_x=enc.delta_x[:4], delta_y=enc.delta_y[:4], delta_d=enc.delta_d[:4],
            dd0=enc.dd0[:4], t0_over_dd0=enc.t0_over_dd0[:4],
        )
        with pytest.raises(DegenerateConfigurationError):
            o6.solve_from_constraints(small, tgt.delta_abc[:4], ref)

    def test_requires_geometric_channels(self):
        scene, enc, tgt, ref = encoded_scene(0)
        obs = scene.observation
        plain = o6.encode_input(obs, ref, o6.InputMode.OFFSET_XYD)
        with pytest.raises(ModeMismatchError):
            o6.solve_from_constraints(plain, tgt.delta_abc, ref)

    def test_noisy_targets_median_add(self, rng):
        # Monte-Carlo bound from the solver contract: sigma = 1e-4 target
        # noise on a 0.2 m object keeps the median ADD below 2 mm.
        spec = small_scene_spec(seed=17, model_kind=o6.SphereModel(0.1), surface_sample_count=1000)
        model = o6.model_for_spec(spec)
        assert model.diameter == pytest.approx(0.2, abs=1e-12)
        adds = []
        for i in range(100):
            scene = o6.render_scene(spec, i, model=model)
            obs = scene.observation
            ref = o6.ref_mean_visible(obs.depth, obs.mask, obs.intrinsics)
            enc = o6.encode_input(obs, ref)
            tgt = o6.encode_targets(obs, ref)
            noisy = tgt.delta_abc + rng.normal(0, 1e-4, tgt.delta_abc.shape)
            report = o6.solve_from_constraints(enc, noisy, ref)
            adds.append(o6.add(report.pose, obs.gt_pose, model))
            assert rotation_defect(report.pose.rotation) <= 1e-9
        assert np.median(adds) < 2e-3

    def test_residual_monotone_under_noise(self, rng):
        clean, noisy = [], []
        for i in range(100):
            scene, enc, tgt, ref = encoded_scene(i, seed=23)
            clean.append(o6.solve_from_constraints(enc, tgt.delta_abc, ref).residual_rms)
            bumped = tgt.delta_abc + rng.normal(0, 1e-3, tgt.delta_abc.shape)
            noisy.append(o6.solve_from_constraints(enc, bumped, ref).residual_rms)
        assert np.mean(clean) < np.mean(noisy)

    def test_refinement_does_not_hurt(self, rng):
        scene, enc, tgt, ref = encoded_scene(3, seed=29)
        noisy = tgt.delta_abc + rng.normal(0, 1e-3, tgt.delta_abc.shape)
        raw = o6.solve_from_constraints(enc, noisy, ref)
        refined = o6.solve_from_constraints(enc, noisy, ref, refine_iterations=3)
        assert refined.residual_rms <= raw.residual_rms * 1.01

    def test_report_fields(self):
        scene, enc, tgt, ref = encoded_scene(1)
        report = o6.solve_from_constraints(enc, tgt.delta_abc, ref)
        assert report.point_count == len(enc)
        assert report.condition_flag is ConditionFlag.WELL_POSED
        # raw block should already be close to the final rotation on clean data
        np.testing.assert_allclose(report.pre_projection_rotation, report.pose.rotation, atol=1e-6)


class TestGeodesicError:
    def test_zero_for_same_pose(self, rng):
        pose = random_pose(rng)
        assert o6.rotation_geodesic_error(pose, pose) == 0.0

    def test_quarter_turn(self):
        a = o6.RigidPose.identity()
        b = o6.RigidPose.from_axis_angle([0, 0, 1], np.pi / 2)
        assert o6.rotation_geodesic_error(a, b) == pytest.approx(np.pi / 2, abs=1e-12)

    def test_large_angle_branch(self):
        a = o6.RigidPose.identity()
        b = o6.RigidPose.from_axis_angle([0, 1, 0], 3.0)
        assert o6.rotation_geodesic_error(a, b) == pytest.approx(3.0, abs=1e-12)

    def test_symmetry(self, rng):
        for _ in range(100):
            a, b = random_pose(rng), random_pose(rng)
            assert abs(o6.rotation_geodesic_error(a, b) - o6.rotation_geodesic_error(b, a)) < 1e-12
