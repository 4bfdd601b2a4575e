//! Capacity planning for a petabyte-per-year survey, then a what-if.

use skyvault::planner::{self, ScanSpec};
use skyvault::units::{format_bytes, MB, TB};

fn main() -> skyvault::Result<()> {
    for row in planner::reference_report()? {
        println!("{:<30} {:>10.2} {:<8} (quoted {})", row.quantity, row.computed, row.unit, row.quoted);
    }

    // how many disks does a one-hour scan of the indexed catalog need?
    let (disks, per_disk) = planner::disks_for_scan_time(120.0 * TB, 150.0 * MB, 3600.0)?;
    println!("\n{disks} disks of {} each scan 120 TB within the hour", format_bytes(per_disk));
    let est = planner::plan_scan(&ScanSpec { disk_count: disks, ..Default::default() })?;
    println!("that is {} servers", est.servers_needed);
    Ok(())
}
