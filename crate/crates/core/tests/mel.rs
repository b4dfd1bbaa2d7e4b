use melrefine::mel::{
    encode_png, hz_to_mel, mel_filterbank, mel_spectrogram, read_wav, render_png, Map2d, MelConfig,
    Waveform,
};

fn htk_center_hz(cfg: &MelConfig, band: usize) -> f64 {
    let mel = |f: f64| 1127.0 * (1.0 + f / 700.0).ln();
    let (lo, hi) = (mel(cfg.f_min), mel(cfg.f_max));
    let m = lo + (hi - lo) * (band + 1) as f64 / (cfg.n_mels + 1) as f64;
    700.0 * ((m / 1127.0).exp() - 1.0)
}

fn sine(freq: f64, sr: u32, len: usize) -> Waveform {
    let samples = (0..len)
        .map(|i| {
            (0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / f64::from(sr)).sin()) as f32
        })
        .collect();
    Waveform::new(samples, sr).unwrap()
}

#[test]
fn htk_anchor_at_1khz() {
    assert!((hz_to_mel(1000.0) - 1000.0).abs() <= 0.2);
}

#[test]
fn sine_at_bin_lands_in_expected_band() {
    let cfg = MelConfig::default();
    let bin_hz = f64::from(cfg.sample_rate) / cfg.n_fft as f64;
    for band in [36, 40, 44, 48] {
        let center = htk_center_hz(&cfg, band);
        assert!((2000.0..=4500.0).contains(&center), "{center}");
        let freq = (center / bin_hz).round() * bin_hz;
        let mel = mel_spectrogram(&sine(freq, cfg.sample_rate, 8000), &cfg).unwrap();
        let mut per_band = vec![0.0f64; cfg.n_mels];
        for (m, acc) in per_band.iter_mut().enumerate() {
            *acc = mel.row(m).iter().map(|&v| f64::from(v).exp()).sum();
        }
        let total: f64 = per_band.iter().sum();
        assert!(
            per_band[band] / total > 0.9,
            "band {band}: {}",
            per_band[band] / total
        );
    }
}

#[test]
fn silence_hits_log_floor_everywhere() {
    let cfg = MelConfig::default();
    let mel = mel_spectrogram(
        &Waveform::new(vec![0.0; 4000], cfg.sample_rate).unwrap(),
        &cfg,
    )
    .unwrap();
    let floor = (1e-5f64).ln() as f32;
    assert_eq!(mel.cols, cfg.frame_count(4000));
    assert!(mel.data.iter().all(|&v| v == floor));
}

#[test]
fn hop_shift_shifts_frames() {
    let cfg = MelConfig::default();
    let mut rng = 12345u64;
    let noise: Vec<f32> = (0..6000)
        .map(|_| {
            rng = rng
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((rng >> 33) as f32 / (1u64 << 31) as f32) - 0.5
        })
        .collect();
    let a = mel_spectrogram(
        &Waveform::new(noise[cfg.hop..].to_vec(), cfg.sample_rate).unwrap(),
        &cfg,
    )
    .unwrap();
    let b = mel_spectrogram(
        &Waveform::new(noise.clone(), cfg.sample_rate).unwrap(),
        &cfg,
    )
    .unwrap();
    let margin = cfg.n_fft / cfg.hop + 1;
    for m in 0..cfg.n_mels {
        for t in margin..a.cols - margin {
            assert!((a.get(m, t) - b.get(m, t + 1)).abs() < 1e-3, "m={m} t={t}");
        }
    }
}

#[test]
fn filterbank_rows_peak_at_one() {
    let bank = mel_filterbank(&MelConfig::default()).unwrap();
    assert_eq!(bank.len(), 64);
    for row in &bank {
        assert_eq!(row.iter().cloned().fold(0.0, f64::max), 1.0);
        assert!(row.iter().all(|&w| (0.0..=1.0).contains(&w)));
    }
    let too_many = MelConfig {
        n_mels: 400,
        ..MelConfig::default()
    };
    assert!(mel_filterbank(&too_many).is_err());
}

#[test]
fn reads_pcm16_and_averages_stereo() {
    let dir = tempfile::tempdir().unwrap();
    let mono = dir.path().join("mono.wav");
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 16_000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(&mono, spec).unwrap();
    for s in [32767i16, -32768, 0, 16384] {
        w.write_sample(s).unwrap();
    }
    w.finalize().unwrap();
    let wav = read_wav(&mono).unwrap();
    assert_eq!(wav.sample_rate, 16_000);
    assert!((wav.samples[0] - 0.999_969).abs() < 1e-6);
    assert_eq!(wav.samples[1], -1.0);
    assert_eq!(wav.samples[3], 0.5);

    let stereo = dir.path().join("stereo.wav");
    let mut w = hound::WavWriter::create(
        &stereo,
        hound::WavSpec {
            channels: 2,
            ..spec
        },
    )
    .unwrap();
    for s in [16384i16, 0, -16384, -16384] {
        w.write_sample(s).unwrap();
    }
    w.finalize().unwrap();
    assert_eq!(read_wav(&stereo).unwrap().samples, vec![0.25, -0.5]);
}

#[test]
fn rejects_unsupported_wav() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("8bit.wav");
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 8000,
        bits_per_sample: 8,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(&path, spec).unwrap();
    w.write_sample(3i8).unwrap();
    w.finalize().unwrap();
    assert_eq!(read_wav(&path).unwrap_err().kind(), "unsupported-audio");

    let cfg = MelConfig::default();
    let wrong_rate = Waveform::new(vec![0.0; 2048], 22_050).unwrap();
    assert_eq!(
        mel_spectrogram(&wrong_rate, &cfg).unwrap_err().kind(),
        "unsupported-audio"
    );
}

#[test]
fn png_decodes_with_low_rows_at_bottom() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.png");
    let map = Map2d::new(3, 2, vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0]).unwrap();
    render_png(&map, &path).unwrap();
    let img = image::open(&path).unwrap().into_luma8();
    assert_eq!(img.dimensions(), (2, 3));
    assert_eq!(img.get_pixel(0, 0).0, [255]);
    assert_eq!(img.get_pixel(1, 1).0, [128]);
    assert_eq!(img.get_pixel(0, 2).0, [0]);
    assert_eq!(std::fs::read(&path).unwrap(), encode_png(&map).unwrap());
}
