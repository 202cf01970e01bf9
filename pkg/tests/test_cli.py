"""End-to-end command tests driven through main(argv).

Training runs here are deliberately tiny (dozens of samples, two epochs);
they exercise plumbing and artifact layout, not convergence.
"""

import numpy as np
import pytest

from pcvae.cli import main
from pcvae.data_io import load_ppm, load_wav, synth_dataset, write_ppm, write_wav
from pcvae.encoder import build_bank, compress
from pcvae.tokenizer import image_to_stripes


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def pid_values(stdout):
    values = {}
    for line in stdout.splitlines():
        head, value = line.rsplit(" bits", 1)[0].rsplit(None, 1)
        values[head.strip()] = float(value)
    return values


# ---------------------------------------------------------------- pid

def test_pid_xor(capsys):
    code, out, _ = run(capsys, "pid", "--case", "xor")
    v = pid_values(out)
    assert code == 0
    assert v["interaction (chain contrast)"] == pytest.approx(1.0, abs=1e-9)
    # the two routes disagree on XOR: both sources are needed jointly, yet
    # each conditional alone carries a full bit, so the remainder goes negative
    assert v["interaction (synergy-redundancy)"] == pytest.approx(-1.0, abs=1e-9)
    assert v["total I(X1,X2;Y)"] == pytest.approx(1.0, abs=1e-9)


def test_pid_copy(capsys):
    code, out, _ = run(capsys, "pid", "--case", "copy")
    v = pid_values(out)
    assert code == 0
    assert v["interaction (chain contrast)"] == pytest.approx(-1.0, abs=1e-9)
    assert v["redundancy"] == pytest.approx(1.0, abs=1e-9)


def test_pid_indep(capsys):
    code, out, _ = run(capsys, "pid", "--case", "indep")
    assert code == 0
    assert all(x == pytest.approx(0.0, abs=1e-9) for x in pid_values(out).values())


def test_pid_needs_exactly_one_source(capsys, tmp_path):
    assert run(capsys, "pid")[0] == 2
    joint = tmp_path / "j.txt"
    joint.write_text("2 2 2\n0 0 0 1.0\n")
    assert run(capsys, "pid", "--case", "xor", "--joint", str(joint))[0] == 2


def test_pid_joint_file_matches_builtin_case(capsys, tmp_path):
    joint = tmp_path / "copy.txt"
    joint.write_text(
        "# copy channel: both sources mirror the target\n"
        "2 2 2\n"
        "0 0 0 0.5\n"
        "1 1 1 0.5\n"
    )
    code, out, _ = run(capsys, "pid", "--joint", str(joint))
    assert code == 0
    _, builtin, _ = run(capsys, "pid", "--case", "copy")
    assert out == builtin


@pytest.mark.parametrize(
    "body",
    [
        "",                              # no cardinality line
        "2 2\n0 0 0 1.0\n",              # two cardinalities
        "2 2 2\n0 0 1.0\n",              # short entry
        "2 2 2\n0 0 2 1.0\n",            # index outside card
        "2 2 2\n0 0 0 0.25\n",           # mass misses 1
    ],
)
def test_pid_rejects_malformed_joint(capsys, tmp_path, body):
    joint = tmp_path / "bad.txt"
    joint.write_text(body)
    code, _, err = run(capsys, "pid", "--joint", str(joint))
    assert code == 2
    assert "error:" in err


# ---------------------------------------------------------------- train

TINY = ("--synthetic", "48", "--epochs", "2", "--batch-size", "16",
        "--projection-dim", "4", "--seed", "3")


@pytest.fixture(scope="module")
def joint_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("joint_run")
    assert main(["train", *TINY, "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def audio_only_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("audio_run")
    assert main(["train", *TINY, "--mode", "audio-only-input", "--out", str(out)]) == 0
    return out


def test_train_writes_artifacts(joint_run):
    assert (joint_run / "model.ckpt").exists()
    lines = (joint_run / "history.csv").read_text().splitlines()
    assert lines[0].startswith("epoch,total_loss")
    assert len(lines) == 3  # header + one row per epoch
    resolved = (joint_run / "config.resolved").read_text()
    assert "command = train" in resolved
    assert "preset = desk" in resolved
    assert "step_size = 0.0007" in resolved  # desk default carried into the echo


def test_train_needs_a_dataset(capsys, tmp_path):
    code, _, err = run(capsys, "train", "--out", str(tmp_path / "x"))
    assert code == 2 and "dataset" in err


def test_train_rejects_two_datasets(capsys, tmp_path):
    code, _, err = run(capsys, "train", "--synthetic", "8", "--data", "m.txt",
                       "--out", str(tmp_path / "x"))
    assert code == 2 and "not both" in err


def test_train_latent_mismatch(capsys, tmp_path):
    code, _, err = run(capsys, "train", "--preset", "desk", "--latent", "300",
                       "--dry-run", "--out", str(tmp_path / "x"))
    assert code == 2 and "latent" in err


def test_train_seed_reproduces_artifacts_byte_for_byte(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["train", *TINY, "--out", str(a)]) == 0
    assert main(["train", *TINY, "--out", str(b)]) == 0
    assert (a / "model.ckpt").read_bytes() == (b / "model.ckpt").read_bytes()
    assert (a / "history.csv").read_bytes() == (b / "history.csv").read_bytes()


def test_train_seed_changes_artifacts(tmp_path, joint_run):
    other = tmp_path / "other"
    args = [arg if arg != "3" else "4" for arg in TINY]
    assert main(["train", *args, "--out", str(other)]) == 0
    assert (other / "model.ckpt").read_bytes() != (joint_run / "model.ckpt").read_bytes()


def test_dry_run_resolves_paper_alias(capsys, tmp_path):
    code, out, _ = run(capsys, "train", "--preset", "paper-visual", "--latent", "300",
                       "--dry-run", "--out", str(tmp_path / "d"))
    assert code == 0
    assert "preset paper-300: mode joint, latent 300" in out
    assert "6 matrices of 150x512" in out
    assert "5 matrices of 150x441" in out
    assert "('image', 32, 32)" in out
    assert not (tmp_path / "d" / "history.csv").exists()


def test_dry_run_audio_alias(capsys, tmp_path):
    code, out, _ = run(capsys, "train", "--preset", "paper-audio", "--latent", "250",
                       "--dry-run", "--out", str(tmp_path / "d"))
    assert code == 0
    assert "mode audio-only-input, latent 250" in out


def test_config_file_flags_win(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# tiny smoke settings\n"
        "synthetic = 48\n"
        "epochs = 5\n"
        "batch_size = 16\n"
        "projection_dim = 4\n"
        "seed = 9\n"
        "step_size = 0.01\n"
    )
    out = tmp_path / "run"
    code, _, _ = run(capsys, "train", "--config", str(cfg), "--epochs", "2",
                     "--out", str(out))
    assert code == 0
    resolved = (out / "config.resolved").read_text()
    assert "epochs = 2" in resolved       # flag beat the file
    assert "step_size = 0.01" in resolved  # file beat the preset default
    assert "seed = 9" in resolved
    assert len((out / "history.csv").read_text().splitlines()) == 3


def test_config_file_unknown_key(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("epocs = 5\n")
    code, _, err = run(capsys, "train", "--config", str(cfg), "--out", str(tmp_path / "x"))
    assert code == 2 and "unknown key" in err


def test_config_file_bad_value(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("epochs = soon\n")
    code, _, err = run(capsys, "train", "--config", str(cfg), "--out", str(tmp_path / "x"))
    assert code == 2 and "bad value" in err


def test_config_file_needs_assignments(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("epochs\n")
    code, _, err = run(capsys, "train", "--config", str(cfg), "--out", str(tmp_path / "x"))
    assert code == 2 and "key = value" in err


def test_sample_interval_writes_reconstructions(tmp_path):
    out = tmp_path / "r"
    assert main(["train", *TINY, "--epochs", "4", "--sample-interval", "2",
                 "--out", str(out)]) == 0
    for epoch in (2, 4):
        assert (out / f"recon_epoch{epoch:04d}.ppm").exists()
        assert (out / f"recon_epoch{epoch:04d}.wav").exists()
    assert len(list(out.glob("recon_*"))) == 4


def test_train_on_manifest(tmp_path, capsys):
    from pcvae.data_io import write_dataset

    manifest = write_dataset(synth_dataset(24, seed=2), tmp_path / "ds")
    out = tmp_path / "m"
    code, _, _ = run(capsys, "train", "--data", str(manifest), "--epochs", "1",
                     "--batch-size", "8", "--ii", "off", "--out", str(out))
    assert code == 0
    assert (out / "model.ckpt").exists()


# ---------------------------------------------------------------- generate

@pytest.fixture(scope="module")
def paired_inputs(tmp_path_factory):
    d = tmp_path_factory.mktemp("inputs")
    sample = synth_dataset(1, seed=77)[0]
    write_ppm(d / "img.ppm", sample.image)
    write_wav(d / "clip.wav", sample.audio)
    return d / "img.ppm", d / "clip.wav"


def test_generate_both(capsys, tmp_path, joint_run, paired_inputs):
    img, wav = paired_inputs
    out = tmp_path / "g"
    code, _, _ = run(capsys, "generate", "--checkpoint", str(joint_run / "model.ckpt"),
                     "--from", "both", "--in-image", str(img), "--in-audio", str(wav),
                     "--count", "2", "--out", str(out))
    assert code == 0
    assert sorted(p.name for p in out.glob("gen_*")) == [
        "gen_000.ppm", "gen_000.wav", "gen_001.ppm", "gen_001.wav",
    ]
    # resampled noise must change the output
    assert (out / "gen_000.ppm").read_bytes() != (out / "gen_001.ppm").read_bytes()
    image = load_ppm(out / "gen_000.ppm")
    assert image.shape == (8, 8, 3)
    clip = load_wav(out / "gen_000.wav")
    assert clip.samples.shape == (64,)
    assert clip.sample_rate == load_wav(wav).sample_rate


def test_generate_from_audio_yields_images_only(capsys, tmp_path, audio_only_run,
                                                paired_inputs):
    _, wav = paired_inputs
    out = tmp_path / "g"
    code, _, _ = run(capsys, "generate", "--checkpoint", str(audio_only_run / "model.ckpt"),
                     "--from", "audio", "--in", str(wav), "--count", "3",
                     "--out", str(out))
    assert code == 0
    assert len(list(out.glob("gen_*.ppm"))) == 3
    assert not list(out.glob("gen_*.wav"))


def test_generate_is_deterministic(capsys, tmp_path, audio_only_run, paired_inputs):
    _, wav = paired_inputs
    outs = []
    for name in ("g1", "g2"):
        out = tmp_path / name
        assert main(["generate", "--checkpoint", str(audio_only_run / "model.ckpt"),
                     "--from", "audio", "--in", str(wav), "--seed", "5",
                     "--out", str(out)]) == 0
        outs.append((out / "gen_000.ppm").read_bytes())
    assert outs[0] == outs[1]


def test_generate_mode_mismatch(capsys, tmp_path, joint_run, paired_inputs):
    _, wav = paired_inputs
    code, _, err = run(capsys, "generate", "--checkpoint", str(joint_run / "model.ckpt"),
                       "--from", "audio", "--in", str(wav), "--out", str(tmp_path / "g"))
    assert code == 2
    assert "audio-only-input" in err


def test_generate_missing_input_file_flag(capsys, tmp_path, joint_run):
    code, _, err = run(capsys, "generate", "--checkpoint", str(joint_run / "model.ckpt"),
                       "--from", "both", "--out", str(tmp_path / "g"))
    assert code == 2 and "--in" in err


def test_generate_bad_count(capsys, tmp_path, audio_only_run, paired_inputs):
    _, wav = paired_inputs
    code, _, err = run(capsys, "generate", "--checkpoint", str(audio_only_run / "model.ckpt"),
                       "--from", "audio", "--in", str(wav), "--count", "0",
                       "--out", str(tmp_path / "g"))
    assert code == 2 and "count" in err


def test_generate_missing_checkpoint(capsys, tmp_path, paired_inputs):
    _, wav = paired_inputs
    code, _, _ = run(capsys, "generate", "--checkpoint", str(tmp_path / "nope.ckpt"),
                     "--from", "audio", "--in", str(wav), "--out", str(tmp_path / "g"))
    assert code == 2


# ---------------------------------------------------------------- eval

def test_eval_writes_metrics(capsys, tmp_path, joint_run):
    out = tmp_path / "e"
    code, stdout, _ = run(capsys, "eval", "--checkpoint", str(joint_run / "model.ckpt"),
                          "--synthetic", "64", "--seed", "3", "--out", str(out))
    assert code == 0
    lines = (out / "metrics.csv").read_text().splitlines()
    assert lines[0] == ("split,n,mse_visual,mse_audio,baseline_mse_visual,"
                        "ii_gauss_nats,ii_plugin_bits")
    rows = {ln.split(",")[0]: ln.split(",") for ln in lines[1:]}
    assert set(rows) == {"train", "test"}
    assert rows["train"][1] == "56" and rows["test"][1] == "8"
    assert float(rows["train"][2]) > 0 and float(rows["train"][3]) > 0
    assert float(rows["train"][4]) > 0
    # small test split cannot support the gaussian estimate; columns stay empty
    assert rows["test"][5] == "" and rows["test"][6] == ""
    assert rows["train"][5] != ""


def test_eval_ii_off_blanks_columns(capsys, tmp_path, joint_run):
    out = tmp_path / "e"
    code, _, _ = run(capsys, "eval", "--checkpoint", str(joint_run / "model.ckpt"),
                     "--synthetic", "64", "--seed", "3", "--ii", "off",
                     "--split", "train", "--out", str(out))
    assert code == 0
    row = (out / "metrics.csv").read_text().splitlines()[1].split(",")
    assert row[5] == "" and row[6] == ""
    assert float(row[2]) > 0


def test_eval_unknown_split(capsys, tmp_path, joint_run):
    code, _, err = run(capsys, "eval", "--checkpoint", str(joint_run / "model.ckpt"),
                       "--synthetic", "64", "--split", "holdout",
                       "--out", str(tmp_path / "e"))
    assert code == 2 and "holdout" in err


def test_eval_needs_dataset(capsys, tmp_path, joint_run):
    code, _, err = run(capsys, "eval", "--checkpoint", str(joint_run / "model.ckpt"),
                       "--out", str(tmp_path / "e"))
    assert code == 2 and "dataset" in err


# ---------------------------------------------------------------- parser

def test_unknown_command_exits_2(capsys):
    assert main(["polish"]) == 2


def test_unknown_flag_exits_2(capsys):
    assert main(["train", "--bogus"]) == 2


def test_threads_env_zero_means_auto(monkeypatch):
    monkeypatch.setenv("PCVAE_THREADS", "0")
    bank = build_bank("visual", in_dim=32, out_dim=8, count=6, seed=1)
    image = np.linspace(0.0, 1.0, 192).reshape(8, 8, 3)
    bundle = image_to_stripes(image, 6)
    auto = compress(bank, bundle)
    serial = compress(bank, bundle, threads=1)
    assert np.array_equal(auto, serial)
