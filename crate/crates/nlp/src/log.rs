//! CSV export of the iteration log.

use std::io::Write;

use crate::ipm::IterationRecord;

pub fn write_iteration_log<W: Write>(records: &[IterationRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
