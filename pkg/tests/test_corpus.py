import numpy as np
import pytest
import torch

from whisperconv import alignment as al
from whisperconv import dsp, synthetic as sy, tensorio
from whisperconv.corpus import (
    AblationInputs,
    AlignConfig,
    ConfigurationError,
    InfeasibleSplitError,
    ManifestParseError,
    ManifestValidationError,
    PosteriorgramSource,
    SplitSpec,
    UtteranceRecord,
    aligned_files,
    build_aligned_corpus,
    corpus_stats,
    dsp_whisperize,
    format_stats,
    gen_pseudo_pair,
    load_feature_pairs,
    load_manifest,
    make_ablation_config,
    parse_manifest,
    read_aligned_manifest,
    resolve_pairs,
    select_prompts,
    split_speakers,
    stats_row,
    write_manifest,
)
from whisperconv.features import Frontend
from whisperconv.flow import FlowConfig, FlowModel
from whisperconv.tokenizer import FsqConfig, RoleError, SeqModel, SeqModelConfig, Tokenizer


def rec(id, speaker="s", mode="normal", pair=None, lang="EN", prov="real", path="x.wav", text="hello world"):
    return UtteranceRecord(id, speaker, mode, lang, path, pair, prov, text)


# -- manifests ------------------------------------------------------------------


def test_empty_manifest(tmp_path):
    p = tmp_path / "m.tsv"
    p.write_text("")
    assert load_manifest(p) == []


def test_manifest_round_trip_with_spaces(tmp_path):
    records = [rec("a", mode="whisper", pair="p1", text="two  words"), rec("b", pair="p1"), rec("c", text="")]
    p = tmp_path / "m.tsv"
    write_manifest(records, p)
    assert p.read_text().startswith("#")
    assert load_manifest(p) == records


def test_duplicate_ids_rejected():
    text = "a\ts\tnormal\tEN\tx.wav\t\treal\thi\na\ts\tnormal\tEN\ty.wav\t\treal\tho\n"
    with pytest.raises(ManifestValidationError, match="duplicate"):
        parse_manifest(text)


def test_pair_resolution():
    records = [rec("w1", mode="whisper", pair="p"), rec("n1", pair="p"), rec("x"), rec("y", mode="whisper")]
    pairs = resolve_pairs(records)
    assert list(pairs) == ["p"]
    assert pairs["p"][0].id == "w1" and pairs["p"][1].id == "n1"


def test_dangling_pair_rejected():
    text = "a\ts\twhisper\tEN\tx.wav\tp9\treal\thi\n"
    with pytest.raises(ManifestValidationError, match="p9"):
        parse_manifest(text)


def test_parse_error_reports_line():
    text = "# header\nok\ts\tnormal\tEN\tx.wav\t\treal\thi\nbroken line\n"
    with pytest.raises(ManifestParseError, match=":3:"):
        parse_manifest(text)
    with pytest.raises(ManifestParseError, match=":1:"):
        parse_manifest("a\ts\tshouting\tEN\tx.wav\t\treal\thi\n")


# -- splits ----------------------------------------------------------------------


def test_split_91_6_3():
    records = [rec(f"u{i}", speaker=f"spk{i}") for i in range(100)]
    train, val, test = split_speakers(records, SplitSpec((91, 6, 3), seed=0))
    assert (len(train), len(val), len(test)) == (91, 6, 3)


def test_split_deterministic():
    records = [rec(f"u{i}", speaker=f"spk{i % 17}") for i in range(80)]
    assert split_speakers(records, SplitSpec(seed=5)) == split_speakers(records, SplitSpec(seed=5))


def test_split_disjoint_and_complete():
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n_spk = int(rng.integers(3, 40))
        records = [rec(f"u{i}", speaker=f"s{rng.integers(n_spk)}") for i in range(int(rng.integers(n_spk, 200)))]
        parts = split_speakers(records, SplitSpec(seed=seed))
        sets = [{r.speaker for r in p} for p in parts]
        assert not (sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2])
        assert set().union(*sets) == {r.speaker for r in records}
        assert sum(len(p) for p in parts) == len(records)


def test_split_needs_three_speakers():
    with pytest.raises(InfeasibleSplitError):
        split_speakers([rec("a", speaker="x"), rec("b", speaker="y")])
    with pytest.raises(ValueError):
        SplitSpec((1, 1))


# -- aligned corpus ------------------------------------------------------------------


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    sy.write_paired_corpus(d, pairs=10, seed=0)
    return d


def test_identical_pair_aligns_exactly(tmp_path):
    units = sy.VoiceUnits.create(6, 1)
    w = sy.synthesize(units, [0, 3, 1, 4], [0.1, 0.12, 0.08, 0.1], seed=2)
    dsp.write_wav(w, tmp_path / "a.wav")
    records = [rec("w", mode="whisper", pair="p", path="a.wav"), rec("n", pair="p", path="a.wav")]
    build_aligned_corpus(records, tmp_path / "out", tmp_path)
    files = aligned_files(tmp_path / "out", "p")
    assert np.array_equal(tensorio.read_tensor(files["whisper"]), tensorio.read_tensor(files["normal"]))


def test_time_stretched_pair_beats_padding(tmp_path):
    units = sy.VoiceUnits.create(10, 3)
    rng = np.random.default_rng(4)
    labels, durations = sy.random_script(rng, 10, 10)
    dsp.write_wav(sy.synthesize(units, labels, durations, seed=1), tmp_path / "n.wav")
    dsp.write_wav(sy.synthesize(units, labels, durations * 1.5, seed=1), tmp_path / "w.wav")
    records = [rec("w", mode="whisper", pair="p", path="w.wav"), rec("n", pair="p", path="n.wav")]
    build_aligned_corpus(records, tmp_path / "out", tmp_path)
    [aligned] = load_feature_pairs(tmp_path / "out")
    [raw] = make_ablation_config("RAW", AblationInputs(records, str(tmp_path)))
    err_aligned = np.linalg.norm(aligned.whisper - aligned.normal, axis=1).mean()
    err_raw = np.linalg.norm(raw.whisper - raw.normal, axis=1).mean()
    assert err_aligned <= 0.6 * err_raw


def test_ten_pairs_frame_matched_and_rerun_skips(fixture_dir, tmp_path):
    records = load_manifest(fixture_dir / "manifest.tsv")
    out = tmp_path / "aligned"
    first = build_aligned_corpus(records, out, fixture_dir)
    assert first.processed == 10 and not first.failures
    entries = read_aligned_manifest(out)
    assert len(entries) == 10
    for p in load_feature_pairs(out):
        assert p.whisper.shape == p.normal.shape
    for e in entries:
        m = tensorio.read_tensor(aligned_files(out, e["pair_id"])["mapping"])
        assert len(m) == e["frames"] and np.all(np.diff(m) >= 0)
    again = build_aligned_corpus(records, out, fixture_dir)
    assert again.skipped == 10 and again.processed == 0
    assert read_aligned_manifest(out) == entries
    forced = build_aligned_corpus(records[:2], out, fixture_dir, force=True)
    assert forced.processed == 1


def test_failures_are_isolated(fixture_dir, tmp_path):
    records = load_manifest(fixture_dir / "manifest.tsv")[:4]
    broken = records + [rec("wx", mode="whisper", pair="px", path="missing.wav"), rec("nx", pair="px", path="n0.wav")]
    result = build_aligned_corpus(broken, tmp_path / "o", fixture_dir)
    assert result.processed == 2 and list(result.failures) == ["px"]


def test_alignment_output_deterministic(fixture_dir, tmp_path):
    records = load_manifest(fixture_dir / "manifest.tsv")[:4]
    build_aligned_corpus(records, tmp_path / "a", fixture_dir)
    build_aligned_corpus(records, tmp_path / "b", fixture_dir)
    for name in sorted(p.name for p in (tmp_path / "a").iterdir()):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_word_metadata_from_posteriorgrams(fixture_dir, tmp_path):
    records = load_manifest(fixture_dir / "manifest.tsv")[:2]
    vocab = ["_", "a", "b"]
    frames = 12
    labels = [0, 1, 1, 0, 2, 2, 2, 0, 1, 0, 0, 0]
    logp = np.full((frames, 3), -20.0)
    logp[np.arange(frames), labels] = 0.0
    post = al.Posteriorgram(logp - np.log(np.exp(logp).sum(1, keepdims=True)))
    source = PosteriorgramSource(vocab, lambda utt: post)
    records = [UtteranceRecord(r.id, r.speaker, r.mode, r.language, r.audio_path, r.pair_id, r.provenance, "ab a") for r in records]
    build_aligned_corpus(records, tmp_path / "o", fixture_dir, posteriorgrams=source)
    [entry] = read_aligned_manifest(tmp_path / "o")
    # half-open frame spans
    assert entry["normal_words"] == [[1, 7], [8, 9]]


def test_inversion_writes_audio(fixture_dir, tmp_path):
    records = load_manifest(fixture_dir / "manifest.tsv")[:2]
    build_aligned_corpus(records, tmp_path / "o", fixture_dir, AlignConfig(invert=True, vocoder_iterations=4))
    assert dsp.load_wav(tmp_path / "o" / "p0.whisper.aligned.wav").duration > 0


# -- pseudo pairs --------------------------------------------------------------------


def pseudo_models(seed=0):
    torch.manual_seed(seed)
    fsq = FsqConfig((5, 5))
    cfg = SeqModelConfig(feature_dim=80, embed_dim=2, dim_model=16, dim_ff=16, heads=2, layers=1)
    distilled = Tokenizer(SeqModel(cfg, "distilled"), fsq)
    n2w = Tokenizer(distilled.model.derive("n2w"), fsq)
    flow = FlowModel(FlowConfig(codebook_size=25, dim_model=16, dim_ff=16, heads=2, layers=1))
    return distilled, n2w, flow


def test_prompt_policy_longest_clip(fixture_dir):
    records = load_manifest(fixture_dir / "manifest.tsv")
    prompts = select_prompts(records, fixture_dir)
    for spk, chosen in prompts.items():
        durs = [dsp.wav_duration(fixture_dir / r.audio_path) for r in records if r.speaker == spk and r.mode == "normal"]
        assert chosen.mode == "normal" and dsp.wav_duration(fixture_dir / chosen.audio_path) == max(durs)


def test_gen_pseudo_pair_contract(fixture_dir, tmp_path):
    distilled, n2w, flow = pseudo_models()
    records = load_manifest(fixture_dir / "manifest.tsv")
    normal = next(r for r in records if r.mode == "normal")
    prompt = select_prompts(records, fixture_dir)[normal.speaker]
    wave, recs, info = gen_pseudo_pair(normal, n2w, distilled, flow, prompt, fixture_dir, tmp_path / "a", seed=3)
    assert len(recs) == 2 and {r.mode for r in recs} == {"whisper", "normal"}
    assert all(r.provenance == "pseudo" and r.transcript == normal.transcript for r in recs)
    assert recs[0].pair_id == recs[1].pair_id
    assert info["token_frames"] == info["source_frames"]
    src = dsp.wav_duration(fixture_dir / normal.audio_path)
    assert abs(wave.duration - src) <= 0.2 * src
    wave2, _, _ = gen_pseudo_pair(normal, n2w, distilled, flow, prompt, fixture_dir, tmp_path / "b", seed=3)
    assert np.array_equal(wave.samples, wave2.samples)
    assert (tmp_path / "a" / f"{info['pair_id']}.whisper.wav").read_bytes() == (tmp_path / "b" / f"{info['pair_id']}.whisper.wav").read_bytes()


def test_gen_pseudo_pair_checks_roles(fixture_dir, tmp_path):
    distilled, n2w, flow = pseudo_models()
    records = load_manifest(fixture_dir / "manifest.tsv")
    normal = next(r for r in records if r.mode == "normal")
    with pytest.raises(RoleError):
        gen_pseudo_pair(normal, distilled, distilled, flow, normal, fixture_dir, tmp_path)
    with pytest.raises(RoleError):
        gen_pseudo_pair(normal, n2w, distilled, n2w.model, normal, fixture_dir, tmp_path)


# -- ablation modes --------------------------------------------------------------------


def test_raw_mode_pads_only(fixture_dir):
    records = load_manifest(fixture_dir / "manifest.tsv")[:4]
    fe = Frontend()
    pairs = make_ablation_config("RAW", AblationInputs(records, str(fixture_dir)))
    assert len(pairs) == 2
    for p, pid in zip(pairs, ["p0", "p1"]):
        w, n = resolve_pairs(records)[pid]
        wm = fe.mel(fe.load(fixture_dir / w.audio_path)).values
        nm = fe.mel(fe.load(fixture_dir / n.audio_path)).values
        assert p.whisper.shape == p.normal.shape
        assert np.array_equal(p.whisper[: len(wm)], wm) and np.array_equal(p.normal[: len(nm)], nm)
        assert np.all(p.normal[len(nm) :] == np.log(dsp.EPS))


def test_dsp_mode_removes_voicing(fixture_dir):
    records = load_manifest(fixture_dir / "manifest.tsv")[:6]
    fe = Frontend()
    for r in records:
        if r.mode != "normal":
            continue
        wave = fe.load(fixture_dir / r.audio_path)
        assert dsp.extract_f0(wave).voiced.mean() >= 0.5
        assert dsp.extract_f0(dsp_whisperize(wave)).voiced.mean() <= 0.1
    pairs = make_ablation_config("DSP", AblationInputs(records, str(fixture_dir)))
    assert len(pairs) == 3 and all(p.whisper.shape == p.normal.shape for p in pairs)


def test_a_plus_p_concatenates(fixture_dir, tmp_path):
    records = load_manifest(fixture_dir / "manifest.tsv")[:6]
    build_aligned_corpus(records, tmp_path / "aligned", fixture_dir)
    pseudo = [
        UtteranceRecord(f"q{k}{m[0]}", "spk0", m, "EN", f"{m[0]}{k}.wav", f"q{k}", "pseudo", "t")
        for k in range(2)
        for m in ("whisper", "normal")
    ]
    inputs = AblationInputs(records, str(fixture_dir), str(tmp_path / "aligned"), pseudo)
    a = make_ablation_config("ALIGNED", inputs)
    p = make_ablation_config("PSEUDO", inputs)
    both = make_ablation_config("A_PLUS_P", inputs)
    assert len(both) == len(a) + len(p)
    assert [x.pair_id for x in both] == [x.pair_id for x in a] + [x.pair_id for x in p]
    assert len({x.pair_id for x in both}) == len(both)


def test_ablation_missing_inputs():
    for mode in ("RAW", "DSP", "ALIGNED", "PSEUDO", "A_PLUS_P"):
        with pytest.raises(ConfigurationError):
            make_ablation_config(mode, AblationInputs())
    with pytest.raises(ConfigurationError):
        make_ablation_config("MAGIC", AblationInputs())


# -- statistics ---------------------------------------------------------------------------


def cn_real_records():
    records, durations = [], {}
    per_clip = 18 * 3600 / 8000
    for k in range(4000):
        spk = f"spk{k % 146}"
        for mode in ("whisper", "normal"):
            rid = f"{mode[0]}{k}"
            records.append(UtteranceRecord(rid, spk, mode, "CN", f"{rid}.wav", f"p{k}", "real", ""))
            durations[rid] = per_clip
    return records, durations


def test_stats_compact_row():
    records, durations = cn_real_records()
    stats = corpus_stats(records, durations=durations)
    assert stats_row(stats, "CN", "real") == "CN 18 4k 146"
    assert "CN\treal\t18\t4k\t146" in format_stats(stats)


def test_stats_empty():
    stats = corpus_stats([])
    assert stats.groups == {} and stats.total().pairs == 0 and stats.total().hours == 0


def test_stats_additive(fixture_dir):
    records = load_manifest(fixture_dir / "manifest.tsv")
    pseudo = [UtteranceRecord(f"z{r.id}", "other", r.mode, "CN", r.audio_path, f"z{r.pair_id}", "pseudo", "") for r in records[:4]]
    a = corpus_stats(records, fixture_dir)
    b = corpus_stats(pseudo, fixture_dir)
    joint = corpus_stats(records + pseudo, fixture_dir)
    summed = a + b
    for key, g in joint.groups.items():
        assert summed.groups[key].pairs == g.pairs
        assert summed.groups[key].speakers == g.speakers
        assert summed.groups[key].hours == pytest.approx(g.hours)


def test_stats_reads_wav_headers_and_warns(fixture_dir):
    records = load_manifest(fixture_dir / "manifest.tsv")[:2] + [rec("lost", path="nowhere.wav")]
    stats = corpus_stats(records, fixture_dir)
    expected = sum(dsp.wav_duration(fixture_dir / r.audio_path) for r in records[:2]) / 3600
    assert stats.groups[("EN", "real")].hours == pytest.approx(expected)
    assert len(stats.warnings) == 1 and "lost" in stats.warnings[0]


def test_stats_with_one_hertz_wavs(tmp_path):
    import wave

    records = []
    for k in range(3):
        with wave.open(str(tmp_path / f"c{k}.wav"), "wb") as fh:
            fh.setnchannels(1)
            fh.setsampwidth(2)
            fh.setframerate(1)
            fh.writeframes(b"\x00\x00" * 3600)
        records.append(rec(f"c{k}", speaker=f"s{k}", path=f"c{k}.wav", lang="CN"))
    assert corpus_stats(records, tmp_path).groups[("CN", "real")].hours == pytest.approx(3.0)
