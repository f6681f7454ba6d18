//! Prints the default hydraulic configuration as pretty JSON. The bundled
//! `configs/hydraulics_default.json` is this output checked in verbatim:
//!
//! ```text
//! cargo run -p anklekit-cli --example dump_default_config > configs/hydraulics_default.json
//! ```

fn main() {
    let config = anklekit_core::hydraulics::HydraulicConfig::default();
    println!("{}", serde_json::to_string_pretty(&config).unwrap());
}
