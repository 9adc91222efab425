import json
import math

import numpy as np
import pytest

from burrow.control import Mode
from burrow.geometry import Pose6, Pyramid
from burrow.sim import (FAILED, FLIPPED, RUNNING, SUCCESS, TIMEOUT, EnvInstance, RandomizationConfig, SimConfig,
                        VecEnv, check_termination, curriculum_update, termination_status)
from burrow.sim.trajlog import TrajectoryLogger, export_poses, read_log, replay_episode, replay_log
from burrow.world import Difficulty, EnvSpec, generate_env

NOMINAL = SimConfig(randomize=False)


def empty():
    return EnvSpec(seed=0, difficulty=Difficulty.EASY, floor_pyramids=(), ceiling_pyramids=())


def run(vec, steps, rng=None, scale=0.5):
    rng = rng or np.random.default_rng(0)
    out = []
    for _ in range(steps):
        a = rng.normal(0, scale, (vec.n, 12))
        out.append(vec.step(a))
    return out


class TestReset:
    def test_start_state(self):
        inst = EnvInstance(generate_env(1, "hard"), "e2e")
        obs = inst.reset(7)
        assert obs.shape == (249,)
        assert obs[247:].tolist() == [3.5, 0.0]
        assert inst.status_name == "running" and inst.step_count == 0

    def test_standing_height(self):
        inst = EnvInstance(empty(), sim=NOMINAL)
        inst.reset(0)
        for _ in range(100):
            inst.step(np.zeros(12))
        assert abs(inst.robot.base.h_z - 0.28) < 0.03
        assert inst.status_name == "running"

    def test_reset_seed_reproduces_params(self):
        a = EnvInstance(empty())
        b = EnvInstance(empty())
        a.reset(123)
        b.reset(123)
        assert a.params == b.params
        b.reset(124)
        assert a.params != b.params

    def test_randomized_params_within_bounds(self):
        r = RandomizationConfig()
        vec = VecEnv([empty()] * 200, seed=3)
        vec.reset()
        for e in range(200):
            p = vec.randomized_params(e)
            assert r.mass_scale[0] <= p.mass_scale <= r.mass_scale[1]
            assert r.motor_strength[0] <= p.motor_strength <= r.motor_strength[1]
            assert r.friction[0] <= p.friction <= r.friction[1]
            assert r.restitution[0] <= p.restitution <= r.restitution[1]
            assert max(abs(o) for o in p.joint_offset) <= r.joint_offset
            g = np.array(p.gravity)
            assert r.gravity_magnitude[0] <= np.linalg.norm(g) <= r.gravity_magnitude[1] + 1e-12
            tilt = math.degrees(math.acos(-g[2] / np.linalg.norm(g)))
            assert tilt <= r.gravity_tilt_deg + 1e-9

    def test_nominal_params(self):
        inst = EnvInstance(empty(), sim=NOMINAL)
        inst.reset(5)
        p = inst.params
        assert (p.mass_scale, p.motor_strength, p.friction, p.restitution) == (1.0, 1.0, 0.8, 0.0)
        assert p.gravity == (0.0, 0.0, -9.81)


class TestPhysics:
    def test_free_fall_energy_drift_matches_integrator(self):
        # semi-implicit Euler loses exactly m g^2 dt^2 / 2 per substep in free fall
        vec = VecEnv([empty()], sim=NOMINAL, auto_reset=False)
        vec.reset([0])
        vec.set_state(0, pose=Pose6(0, 0, 0.4))
        e0 = vec.mechanical_energy(0)
        vec.step(np.zeros((1, 12)))
        loss = 4 * 12.0 * 9.81 ** 2 * (1 / 200) ** 2 / 2
        assert e0 - vec.mechanical_energy(0) == pytest.approx(loss, rel=1e-9)

    def test_drop_energy_non_increasing(self):
        vec = VecEnv([empty()], sim=NOMINAL, auto_reset=False)
        vec.reset([0])
        vec.set_state(0, pose=Pose6(0, 0, 0.4))
        energy = [vec.mechanical_energy(0)]
        for _ in range(150):
            vec.step(np.zeros((1, 12)))
            energy.append(vec.mechanical_energy(0))
        assert np.diff(energy).max() <= 1e-6
        assert abs(vec.pos[0, 2] - 0.28) < 0.03

    def test_torso_overlap_counts_collision(self):
        block = Pyramid(-1.75, 0.0, 0.0, 0.6, 0.6, 0.4)
        env = EnvSpec(seed=0, difficulty=Difficulty.EASY, floor_pyramids=((block,),), ceiling_pyramids=())
        inst = EnvInstance(env, sim=NOMINAL)
        inst.reset(0)
        res = inst.step(np.zeros(12))
        assert res.info["n_c"] >= 1
        assert res.breakdown["collision"] <= -0.1

    def test_no_collisions_when_standing_in_open_space(self):
        inst = EnvInstance(empty(), sim=NOMINAL)
        inst.reset(0)
        for _ in range(50):
            assert inst.step(np.zeros(12)).info["n_c"] == 0

    def test_non_finite_action_raises(self):
        inst = EnvInstance(empty())
        inst.reset(0)
        a = np.zeros(12)
        a[3] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            inst.step(a)
        with pytest.raises(ValueError):
            inst.vec.step(np.zeros((1, 11)))


class TestDeterminism:
    def specs(self):
        return [generate_env(s, d) for s in range(4) for d in ("easy", "medium", "hard")]

    @pytest.mark.parametrize("mode", list(Mode))
    def test_worker_count_bit_identical(self, mode):
        traces = []
        for workers in (1, 3, 5):
            vec = VecEnv(self.specs(), mode, seed=9, workers=workers)
            vec.reset()
            batches = run(vec, 60, np.random.default_rng(1))
            traces.append((np.stack([b.obs for b in batches]), np.stack([b.reward for b in batches]),
                           vec.state_dict()["pos"]))
            vec.close()
        for other in traces[1:]:
            for x, y in zip(traces[0], other):
                assert np.array_equal(x, y)

    def test_single_row_matches_instance(self):
        spec = generate_env(5, "hard")
        vec = VecEnv([spec], auto_reset=False)
        inst = EnvInstance(spec)
        vec.reset([77])
        inst.reset(77)
        rng = np.random.default_rng(2)
        for _ in range(80):
            a = rng.normal(0, 0.5, 12)
            b = vec.step(a[None])
            r = inst.step(a)
            assert np.array_equal(b.obs[0], r.observation) and b.reward[0] == r.reward
            if r.done:
                break

    def test_rows_independent_of_batch_neighbours(self):
        spec = generate_env(6, "medium")
        alone = VecEnv([spec], auto_reset=False)
        crowd = VecEnv([generate_env(9, "hard"), spec, empty()], auto_reset=False)
        alone.reset([11])
        crowd.reset([3, 11, 4])
        rng = np.random.default_rng(4)
        for _ in range(60):
            a = rng.normal(0, 0.5, (3, 12))
            x = alone.step(a[1:2])
            y = crowd.step(a)
            assert np.array_equal(x.obs[0], y.obs[1])

    def test_state_dict_round_trip(self):
        vec = VecEnv(self.specs()[:4], seed=2)
        vec.reset()
        run(vec, 30)
        snap = vec.state_dict()
        tail_a = run(vec, 30, np.random.default_rng(8))
        other = VecEnv(self.specs()[:4], seed=99)
        other.load_state_dict(snap)
        tail_b = run(other, 30, np.random.default_rng(8))
        for a, b in zip(tail_a, tail_b):
            assert np.array_equal(a.obs, b.obs) and np.array_equal(a.reward, b.reward)


class TestTermination:
    def test_predicate_examples(self):
        st = termination_status(np.array([0.1, 0.3, 0.3, 0.3, 0.1]), np.array([5, 500, 5, 5, 500]), 500,
                                np.array([-1.0, -1.0, 0.0, -0.2, 0.5]), 0.2, -0.1)
        assert st.tolist() == [SUCCESS, TIMEOUT, FLIPPED, RUNNING, SUCCESS]

    def test_timeout_at_horizon(self):
        inst = EnvInstance(empty(), sim=SimConfig(randomize=False, horizon=10))
        inst.reset(0)
        for k in range(10):
            res = inst.step(np.zeros(12))
            assert res.done == (k == 9)
        assert inst.status_name == "timeout" and check_termination(inst) == "timeout"
        with pytest.raises(RuntimeError):
            inst.step(np.zeros(12))

    def test_success_near_goal(self):
        inst = EnvInstance(empty(), sim=NOMINAL)
        inst.reset(0)
        inst.vec.set_state(0, pose=Pose6(1.65, 0.0, 0.28))
        res = inst.step(np.zeros(12))
        assert res.done and res.info["status"] == "success"
        assert res.breakdown["goal"] >= 1.0

    def test_flip_detected(self):
        inst = EnvInstance(empty(), sim=NOMINAL)
        inst.reset(0)
        inst.vec.set_state(0, pose=Pose6(0, 0, 0.4, math.pi, 0, 0))
        assert check_termination(inst) == "flipped"
        res = inst.step(np.zeros(12))
        assert res.done and res.info["status"] == "flipped"

    def test_auto_reset_restarts_rows(self):
        vec = VecEnv([empty()] * 2, sim=SimConfig(randomize=False, horizon=5), seed=0)
        vec.reset()
        for _ in range(4):
            vec.step(np.zeros((2, 12)))
        b = vec.step(np.zeros((2, 12)))
        assert b.done.all() and b.time_out.all() and (b.episode_len == 5).all()
        assert (vec.step_count == 0).all() and (vec.status == RUNNING).all()


class TestCurriculum:
    def test_examples(self):
        assert curriculum_update(0.6, 0.41) == pytest.approx(0.8)
        assert curriculum_update(0.6, 0.40) == 0.6
        assert curriculum_update(1.6, 0.9) == 1.75
        assert curriculum_update(1.75, 1.0) == 1.75

    def test_e2e_goal_follows_curriculum(self):
        inst = EnvInstance(empty(), "e2e", goal_x=0.6)
        obs = inst.reset(0)
        assert obs[247:] == pytest.approx([0.6 + 1.75, 0.0])


class TestTrajectoryLog:
    def record(self, path, steps=120):
        specs = [generate_env(s, "hard") for s in range(3)]
        vec = VecEnv(specs, "param_skills", sim=SimConfig(horizon=50), seed=4)
        vec.reset()
        rng = np.random.default_rng(6)
        with TrajectoryLogger(path, vec) as log:
            log.begin()
            for _ in range(steps):
                a = rng.normal(0, 0.5, (3, 12))
                running = vec.status == RUNNING
                b = vec.step(a)
                log.record(b, a, running)
        return vec

    def test_replay_is_exact(self, tmp_path):
        path = tmp_path / "log.jsonl"
        self.record(path)
        report = replay_log(path)
        assert report.ok and report.steps == 360
        assert report.episodes >= 6
        rows = export_poses(read_log(path), tmp_path / "poses.csv")
        assert rows == 360

    def test_tamper_detected_at_step(self, tmp_path):
        path = tmp_path / "log.jsonl"
        self.record(path, 40)
        lines = path.read_text().splitlines()
        for k, line in enumerate(lines):
            rec = json.loads(line)
            if rec["kind"] == "step" and rec["env_id"] == 2 and rec["t"] == 17:
                rec["action"][4] += 1e-9
                lines[k] = json.dumps(rec)
        path.write_text("\n".join(lines) + "\n")
        eps = {e.key: e for e in read_log(path)}
        div = replay_episode(eps[(2, 0)])
        assert div is not None and div.t == 17
        assert replay_episode(eps[(1, 0)]) is None


def test_sim_config_validation():
    with pytest.raises(ValueError):
        SimConfig(dt=0.0)
    with pytest.raises(ValueError):
        SimConfig(randomization=RandomizationConfig(friction=(1.0, 0.5)))
    assert FAILED not in (RUNNING, SUCCESS, TIMEOUT, FLIPPED)
