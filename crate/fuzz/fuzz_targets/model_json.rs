#![no_main]
use antago_core::estimator::PolyModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(model) = PolyModel::from_json(data) {
        // Accepted models round-trip and evaluate without panicking.
        let text = model.to_json().expect("serialise accepted model");
        let again = PolyModel::from_json(&text).expect("re-parse serialised model");
        assert_eq!(model.coeffs.len(), again.coeffs.len());
        let _ = model.predict_angles(&[0.5, 1.0, 1.5, 2.0]);
    }
});
