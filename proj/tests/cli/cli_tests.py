#!/usr/bin/env python3
"""End-to-end checks of the gsdrag command line."""
import json
import os
import signal
import socket
import subprocess
import sys
import tempfile
import time
import unittest
import urllib.request

GSDRAG = os.environ.get("GSDRAG", "gsdrag")


def run(*args, timeout=600, **kw):
    return subprocess.run([GSDRAG, *map(str, args)], capture_output=True, text=True, timeout=timeout, **kw)


def make_demo(out, drag=0.2):
    r = run("make-demo", "--out", out, "--drag", drag, "--per-blob", 60, "--size", 32, "--fx", 65, "--cameras", 4)
    assert r.returncode == 0, r.stderr
    return os.path.join(out, "config.json")


class Cli(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def test_missing_scene_is_usage_error(self):
        cfg = make_demo(self.dir)
        r = run("edit", "--config", cfg, "--scene", os.path.join(self.dir, "nope.ply"))
        self.assertEqual(r.returncode, 2, r.stderr)
        self.assertIn("nope.ply", r.stderr)
        self.assertEqual(run("edit", "--out", self.dir).returncode, 2)

    def test_bad_flag_values(self):
        cfg = make_demo(self.dir)
        self.assertEqual(run("edit", "--config", cfg, "--iters", "1.5").returncode, 2)
        self.assertEqual(run("edit", "--config", cfg, "--no-such-flag").returncode, 2)
        self.assertEqual(run("frobnicate").returncode, 2)

    def test_unknown_verify_suite(self):
        r = run("verify", "nonsense")
        self.assertEqual(r.returncode, 2)

    def test_verify_protocol_suite(self):
        r = run("verify", "protocol")
        self.assertEqual(r.returncode, 0, r.stdout + r.stderr)
        self.assertIn("protocol", r.stdout)

    def test_identity_edit(self):
        cfg = make_demo(self.dir, drag=0.0)
        r = run("edit", "--config", cfg, "--iters", 60, "--quiet")
        self.assertEqual(r.returncode, 0, r.stderr)
        out = os.path.join(self.dir, "result")
        with open(os.path.join(out, "summary.json")) as f:
            s = json.load(f)
        self.assertEqual(s["status"], "done")
        self.assertEqual(s["iterations"], 60)
        self.assertLessEqual(max(abs(v) for v in s["masked_mean_shift"]), 1e-3)
        self.assertLessEqual(s["unmasked_mean_displacement"], 1e-3)
        for name in ("result.ply", "loss.csv", "model.bin", "run.ckpt", "edit_spec.json"):
            self.assertTrue(os.path.exists(os.path.join(out, name)), name)
        renders = os.listdir(os.path.join(out, "renders"))
        self.assertEqual(sum(n.startswith("after_") for n in renders), 4)

    def test_runs_are_deterministic(self):
        cfg = make_demo(self.dir)
        csv = []
        for k in range(2):
            out = os.path.join(self.dir, f"run{k}")
            r = run("edit", "--config", cfg, "--iters", 40, "--seed", 7, "--out", out, "--quiet")
            self.assertEqual(r.returncode, 0, r.stderr)
            with open(os.path.join(out, "loss.csv"), "rb") as f:
                csv.append(f.read())
        self.assertEqual(csv[0], csv[1])
        self.assertEqual(csv[0].count(b"\n"), 41)

    def test_sigterm_during_edit_writes_checkpoint(self):
        cfg = make_demo(self.dir)
        out = os.path.join(self.dir, "result")
        p = subprocess.Popen([GSDRAG, "edit", "--config", cfg, "--iters", "100000"], stdout=subprocess.PIPE,
                             stderr=subprocess.PIPE, text=True)
        try:
            line = p.stderr.readline()
            while line and not line.startswith("it "):
                line = p.stderr.readline()
            p.send_signal(signal.SIGTERM)
            p.communicate(timeout=60)
        finally:
            if p.poll() is None:
                p.kill()
        self.assertEqual(p.returncode, 1)
        ckpt = os.path.join(out, "run.ckpt")
        self.assertTrue(os.path.exists(ckpt))

    def test_render(self):
        cfg = make_demo(self.dir)
        out = os.path.join(self.dir, "renders")
        r = run("render", "--scene", os.path.join(self.dir, "scene.ply"), "--cameras",
                os.path.join(self.dir, "cameras.json"), "--out", out)
        self.assertEqual(r.returncode, 0, r.stderr)
        self.assertTrue(any(n.endswith(".png") for n in os.listdir(out)))


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def get(port, path, timeout=10):
    with urllib.request.urlopen(f"http://127.0.0.1:{port}{path}", timeout=timeout) as r:
        return json.loads(r.read())


def post(port, path, body):
    req = urllib.request.Request(f"http://127.0.0.1:{port}{path}", data=json.dumps(body).encode(), method="POST",
                                 headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req, timeout=30) as r:
        return json.loads(r.read())


class Serve(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = self.tmp.name
        make_demo(self.dir)
        self.procs = []

    def tearDown(self):
        for p in self.procs:
            if p.poll() is None:
                p.kill()
                p.wait()
        self.tmp.cleanup()

    def start(self, *extra):
        port = free_port()
        p = subprocess.Popen([GSDRAG, "serve", "--host", "127.0.0.1", "--port", str(port), "--out",
                              os.path.join(self.dir, "ckpt"), "--progress-every", "5", *extra],
                             stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
        self.procs.append(p)
        deadline = time.time() + 30
        while time.time() < deadline:
            try:
                get(port, "/v1/health", timeout=1)
                return p, port
            except OSError:
                if p.poll() is not None:
                    self.fail("serve exited early: " + p.stderr.read())
                time.sleep(0.1)
        self.fail("serve did not come up")

    def test_busy_port(self):
        with socket.socket() as s:
            s.bind(("127.0.0.1", 0))
            s.listen()
            port = s.getsockname()[1]
            r = run("serve", "--host", "127.0.0.1", "--port", port, "--out", self.dir, timeout=30)
        self.assertEqual(r.returncode, 3, r.stderr)

    def test_sigterm_checkpoints_and_resumes(self):
        scene = os.path.join(self.dir, "scene.ply")
        cams = os.path.join(self.dir, "cameras.json")
        target = os.path.join(self.dir, "target.ply")
        p, port = self.start("--scene", scene, "--cameras", cams, "--target", target)
        self.assertEqual(get(port, "/v1/health")["status"], "ok")
        self.assertEqual(get(port, "/v1/scene")["primitives"], 120)
        with open(os.path.join(self.dir, "spec.json")) as f:
            spec = json.load(f)
        post(port, "/v1/points", {"pairs": spec["points"]})
        post(port, "/v1/edit/start", {"iterations": 5000})
        deadline = time.time() + 60
        while get(port, "/v1/edit/status")["iteration"] < 10 and time.time() < deadline:
            time.sleep(0.1)
        p.send_signal(signal.SIGTERM)
        out, err = p.communicate(timeout=60)
        self.assertEqual(p.returncode, 0, err)
        ckpt = [line.split(": ", 1)[1] for line in out.splitlines() if line.startswith("checkpoint: ")]
        self.assertEqual(len(ckpt), 1, out)
        self.assertTrue(os.path.exists(ckpt[0]))

        p2, port2 = self.start("--resume", ckpt[0], "--guidance", "synthetic:" + target)
        st = get(port2, "/v1/edit/status")
        self.assertEqual(st["status"], "paused")
        self.assertGreaterEqual(st["iteration"], 10)
        self.assertEqual(st["total"], 5000)
        post(port2, "/v1/edit/resume", {})
        deadline = time.time() + 60
        while get(port2, "/v1/edit/status")["iteration"] <= st["iteration"] and time.time() < deadline:
            time.sleep(0.1)
        self.assertGreater(get(port2, "/v1/edit/status")["iteration"], st["iteration"])
        p2.send_signal(signal.SIGINT)
        p2.communicate(timeout=60)
        self.assertEqual(p2.returncode, 0)


if __name__ == "__main__":
    unittest.main(verbosity=2)
