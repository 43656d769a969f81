//! Associative-array algebra on a handful of sensor triples.

use podwatch::assoc::{AssocArray, CmpOp, Collision, KeyRange, Triple};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let readings = AssocArray::from_triples(
        [
            Triple::new("rack01.inlet_c", "value", 24.5),
            Triple::new("rack02.inlet_c", "value", 31.0),
            Triple::new("rack03.inlet_c", "value", 22.0),
            Triple::new("zone01.water_leak", "value", 1.0),
        ],
        Collision::Last,
    )?;
    println!("readings ({} non-zero):", readings.nnz());
    readings.write_tsv(std::io::stdout())?;

    let racks = readings.subsref(&KeyRange::prefix("rack"), &KeyRange::single("value"))?;
    let hot = racks.compare_scalar(CmpOp::Gt, 27.0);
    println!("\nrack inlets above 27 C:");
    hot.write_tsv(std::io::stdout())?;

    // Point-to-zone incidence; A * Aᵀ counts shared zones.
    let zones = AssocArray::from_triples(
        [
            Triple::new("rack01.inlet_c", "zone01", 1.0),
            Triple::new("rack02.inlet_c", "zone01", 1.0),
            Triple::new("rack03.inlet_c", "zone02", 1.0),
        ],
        Collision::Sum,
    )?;
    let shared = zones.multiply(&zones.transpose());
    println!("\npoints sharing a zone:");
    shared.write_tsv(std::io::stdout())?;
    println!("\nper-zone point counts: {:?}", zones.col_sums());
    Ok(())
}
