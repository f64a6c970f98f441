use std::ffi::{CStr, CString};
use std::ptr;

use cidlab::contrastive::{info_nce_grad_query, info_nce_loss};
use cidlab::encoder::{save_checkpoint, Checkpoint, EncoderConfig, EncoderPair};
use cidlab::numerics::{l2_normalize, LrSchedule, OptimizerState, RngStream};
use cidlab_ffi::*;

const TINY: &str = "\
epochs = 1
batch_size = 8
queue_capacity = 32
queue_reserve = 8
encoder.base_hidden = 16
encoder.repr_dim = 12
encoder.head_hidden = 12
encoder.embed_dim = 6
data.depth = 2
data.dims = 8
data.level_sigmas = 1, 0.6
data.per_class = 20
probe.epochs = 5
analysis.emit = none
";

fn last_error() -> String {
    unsafe { CStr::from_ptr(cid_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

fn unit(rng: &mut RngStream, d: usize) -> Vec<f64> {
    l2_normalize(&(0..d).map(|_| rng.standard_normal()).collect::<Vec<_>>()).unwrap()
}

fn write_checkpoint(dir: &std::path::Path) -> (CString, Checkpoint) {
    let cfg = EncoderConfig::with_input_dim(5);
    let pair = EncoderPair::init(&cfg, &mut RngStream::new(2)).unwrap();
    let optimizer = OptimizerState::new(
        pair.query.tensors(),
        0.03,
        0.9,
        0.0,
        LrSchedule::Constant,
        1,
    );
    let ck = Checkpoint {
        pair,
        optimizer,
        rng: RngStream::new(2),
        global_step: 0,
    };
    let path = dir.join("e.ckpt");
    save_checkpoint(&ck, &path).unwrap();
    (CString::new(path.to_str().unwrap()).unwrap(), ck)
}

#[test]
fn loss_and_gradient_match_the_library() {
    let mut rng = RngStream::new(1);
    let (d, n) = (6, 5);
    let q = unit(&mut rng, d);
    let p = unit(&mut rng, d);
    let negs: Vec<f64> = (0..n).flat_map(|_| unit(&mut rng, d)).collect();
    let refs: Vec<&[f64]> = negs.chunks(d).collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; d];
    unsafe {
        assert_eq!(
            cid_info_nce_loss(q.as_ptr(), p.as_ptr(), negs.as_ptr(), n, d, 0.2, &mut loss),
            CidStatus::Ok
        );
        assert_eq!(
            cid_info_nce_grad(
                q.as_ptr(),
                p.as_ptr(),
                negs.as_ptr(),
                n,
                d,
                0.2,
                grad.as_mut_ptr()
            ),
            CidStatus::Ok
        );
    }
    assert_eq!(loss, info_nce_loss(&q, &p, &refs, 0.2));
    assert_eq!(grad, info_nce_grad_query(&q, &p, &refs, 0.2));
    assert_eq!(last_error(), "");
}

#[test]
fn bad_arguments_report_codes_and_messages() {
    let v = [1.0, 0.0];
    let mut loss = 0.0;
    unsafe {
        let s = cid_info_nce_loss(v.as_ptr(), v.as_ptr(), v.as_ptr(), 1, 2, 0.0, &mut loss);
        assert_eq!(s, CidStatus::InvalidArgument);
        assert!(last_error().contains("temperature"));
        let s = cid_info_nce_loss(ptr::null(), v.as_ptr(), v.as_ptr(), 1, 2, 0.1, &mut loss);
        assert_eq!(s, CidStatus::NullPointer);
        assert!(last_error().contains("query"));
        let mut order = [0usize; 1];
        assert_eq!(
            cid_rank_difficulty(v.as_ptr(), v.as_ptr(), 0, 2, order.as_mut_ptr()),
            CidStatus::EmptyNegatives
        );
    }
}

#[test]
fn band_count_rounds_with_floor_of_one() {
    assert_eq!(cid_band_count(0.05, 1024), 51);
    assert_eq!(cid_band_count(0.0001, 1024), 1);
    assert_eq!(cid_band_count(1.0, 7), 7);
    assert_eq!(cid_band_count(0.0, 10), 0);
    assert_eq!(cid_band_count(1.5, 10), 0);
}

#[test]
fn ranking_is_hardest_first_with_index_ties() {
    let q = [1.0, 0.0];
    let negs = [0.0, 1.0, 1.0, 0.0, -1.0, 0.0, 1.0, 0.0];
    let mut order = [9usize; 4];
    let s = unsafe { cid_rank_difficulty(q.as_ptr(), negs.as_ptr(), 4, 2, order.as_mut_ptr()) };
    assert_eq!(s, CidStatus::Ok);
    assert_eq!(order, [1, 3, 0, 2]);
}

#[test]
fn encoder_handle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (path, ck) = write_checkpoint(dir.path());
    let mut enc = ptr::null_mut();
    unsafe {
        assert_eq!(cid_encoder_load(path.as_ptr(), &mut enc), CidStatus::Ok);
        let (mut i, mut r, mut e) = (0, 0, 0);
        assert_eq!(cid_encoder_dims(enc, &mut i, &mut r, &mut e), CidStatus::Ok);
        let cfg = ck.config();
        assert_eq!((i, r, e), (cfg.input_dim, cfg.repr_dim, cfg.embed_dim));

        let x = [0.3, -1.0, 2.0, 0.5, 0.0];
        let mut emb = vec![0.0; e];
        let mut rep = vec![0.0; r];
        assert_eq!(
            cid_encoder_embed(enc, x.as_ptr(), 5, emb.as_mut_ptr(), e),
            CidStatus::Ok
        );
        assert_eq!(
            cid_encoder_represent(enc, x.as_ptr(), 5, rep.as_mut_ptr(), r),
            CidStatus::Ok
        );
        assert_eq!(emb, ck.pair.query.embed(&x).unwrap());
        assert_eq!(rep, ck.pair.query.forward_base(&x).unwrap());

        assert_eq!(
            cid_encoder_embed(enc, x.as_ptr(), 4, emb.as_mut_ptr(), e),
            CidStatus::ShapeMismatch
        );
        assert_eq!(
            cid_encoder_embed(enc, x.as_ptr(), 5, emb.as_mut_ptr(), e + 1),
            CidStatus::ShapeMismatch
        );
        cid_encoder_free(enc);
        cid_encoder_free(ptr::null_mut());
    }
}

#[test]
fn load_failures_map_to_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = write_checkpoint(dir.path());
    let file = dir.path().join("e.ckpt");
    let mut bytes = std::fs::read(&file).unwrap();
    let mut enc = ptr::null_mut();
    unsafe {
        let missing = CString::new(dir.path().join("nope").to_str().unwrap()).unwrap();
        assert_eq!(cid_encoder_load(missing.as_ptr(), &mut enc), CidStatus::Io);
        assert!(enc.is_null());

        let mid = bytes.len() / 2;
        bytes[mid] ^= 4;
        std::fs::write(&file, &bytes).unwrap();
        assert_eq!(
            cid_encoder_load(path.as_ptr(), &mut enc),
            CidStatus::CorruptChecksum
        );
        bytes[mid] ^= 4;
        bytes[4] = 9;
        std::fs::write(&file, &bytes).unwrap();
        assert_eq!(
            cid_encoder_load(path.as_ptr(), &mut enc),
            CidStatus::VersionMismatch
        );
        assert!(last_error().contains("version"));
        assert_eq!(
            cid_encoder_load(path.as_ptr(), ptr::null_mut()),
            CidStatus::NullPointer
        );
    }
}

#[test]
fn run_config_trains_and_probes() {
    let dir = tempfile::tempdir().unwrap();
    let text = CString::new(TINY).unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut top1 = -1.0;
    let s = unsafe { cid_run_config(text.as_ptr(), out.as_ptr(), &mut top1) };
    assert_eq!(s, CidStatus::Ok, "{}", last_error());
    assert!((0.0..=1.0).contains(&top1));
    assert!(dir.path().join("results.csv").exists());

    let bad = CString::new("no_such_key = 1\n").unwrap();
    let s = unsafe { cid_run_config(bad.as_ptr(), ptr::null(), ptr::null_mut()) };
    assert_eq!(s, CidStatus::Config);
    assert!(last_error().contains("no_such_key"));
}

#[test]
fn header_declares_every_export() {
    let h = include_str!("../include/cidlab.h");
    for sym in [
        "cid_last_error_message",
        "cid_version",
        "cid_band_count",
        "cid_info_nce_loss",
        "cid_info_nce_grad",
        "cid_rank_difficulty",
        "cid_encoder_load",
        "cid_encoder_free",
        "cid_encoder_dims",
        "cid_encoder_embed",
        "cid_encoder_represent",
        "cid_run_config",
        "typedef struct CidEncoder CidEncoder",
        "CID_STATUS_CORRUPT_CHECKSUM = 7",
    ] {
        assert!(h.contains(sym), "{sym}");
    }
    assert_eq!(
        unsafe { CStr::from_ptr(cid_version()) }.to_str().unwrap(),
        env!("CARGO_PKG_VERSION")
    );
}
