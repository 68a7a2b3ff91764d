//! Output writers: per-step diagnostics CSV, averaged-magnetization CSV,
//! and legacy-ASCII VTK snapshots. Floats are printed with the shortest
//! representation that parses back to the identical value.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::Result;
use crate::fem::NodalVectorField;
use crate::integrator::StepRecord;
use crate::mesh::TetMesh;

pub const DIAGNOSTICS_HEADER: &str = "step,t,energy,e_exchange,e_zeeman,e_pi,norm_dev_max,energy_residual,mx_avg,my_avg,mz_avg,sweeps,wtime_total,wtime_stray";

pub fn diagnostics_csv(records: &[StepRecord]) -> String {
    let mut out = String::new();
    out.push_str(DIAGNOSTICS_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.step,
            r.t,
            r.energy.total(),
            r.energy.exchange,
            r.energy.zeeman,
            r.energy.pi,
            r.norm_dev_max,
            r.energy_residual,
            r.avg_m.x,
            r.avg_m.y,
            r.avg_m.z,
            r.sweeps,
            r.wtime_total,
            r.wtime_stray
        );
    }
    out
}

pub fn write_diagnostics_csv(path: impl AsRef<Path>, records: &[StepRecord]) -> Result<()> {
    std::fs::write(path, diagnostics_csv(records))?;
    Ok(())
}

pub const AVERAGES_HEADER: &str = "t_ns,mx_avg,my_avg,mz_avg";

pub fn averages_csv(rows: &[(f64, Vector3<f64>)]) -> String {
    let mut out = String::new();
    out.push_str(AVERAGES_HEADER);
    out.push('\n');
    for (t, m) in rows {
        let _ = writeln!(out, "{},{},{},{}", t, m.x, m.y, m.z);
    }
    out
}

pub fn write_averages_csv(path: impl AsRef<Path>, rows: &[(f64, Vector3<f64>)]) -> Result<()> {
    std::fs::write(path, averages_csv(rows))?;
    Ok(())
}

pub fn convergence_csv(samples: &[(f64, f64)]) -> String {
    let mut out = String::from("k,error\n");
    for (k, e) in samples {
        let _ = writeln!(out, "{},{}", k, e);
    }
    out
}

pub fn write_convergence_csv(path: impl AsRef<Path>, samples: &[(f64, f64)]) -> Result<()> {
    std::fs::write(path, convergence_csv(samples))?;
    Ok(())
}

/// Legacy ASCII VTK unstructured grid with one 3-component point-data
/// vector field named `m`.
pub fn vtk_unstructured(mesh: &TetMesh, m: &NodalVectorField, title: &str) -> String {
    assert_eq!(m.len(), mesh.vertex_count());
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(out, "{title}");
    out.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {} double", mesh.vertex_count());
    for v in mesh.vertices() {
        let _ = writeln!(out, "{} {} {}", v.x, v.y, v.z);
    }
    let _ = writeln!(out, "CELLS {} {}", mesh.tet_count(), mesh.tet_count() * 5);
    for t in mesh.tets() {
        let _ = writeln!(out, "4 {} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    let _ = writeln!(out, "CELL_TYPES {}", mesh.tet_count());
    for _ in 0..mesh.tet_count() {
        out.push_str("10\n");
    }
    let _ = writeln!(out, "POINT_DATA {}", mesh.vertex_count());
    out.push_str("VECTORS m double\n");
    for v in m.values() {
        let _ = writeln!(out, "{} {} {}", v.x, v.y, v.z);
    }
    out
}

pub fn write_vtk(
    path: impl AsRef<Path>,
    mesh: &TetMesh,
    m: &NodalVectorField,
    title: &str,
) -> Result<()> {
    std::fs::write(path, vtk_unstructured(mesh, m, title))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::EnergyBreakdown;
    use crate::mesh::build_box_mesh;

    fn sample_record() -> StepRecord {
        StepRecord {
            step: 3,
            t: 0.3 + 1e-16,
            energy: EnergyBreakdown {
                exchange: 0.1,
                zeeman: -2.0 / 3.0,
                pi: 1.0 / 7.0,
            },
            energy_residual: -3.52e-11,
            dissipation: 0.01,
            pi_power: 0.009,
            norm_dev_max: 4.4e-13,
            avg_m: Vector3::new(0.983_473_289_120_004_3, -1.0 / 3.0, 1e-300),
            sweeps: 17,
            residual: 9e-11,
            stray_solves: 18,
            wtime_total: 0.5,
            wtime_stray: 0.25,
            wtime_field: 0.2,
            wtime_nodal: 0.05,
        }
    }

    #[test]
    fn diagnostics_header_matches_contract() {
        let text = diagnostics_csv(&[sample_record()]);
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "step,t,energy,e_exchange,e_zeeman,e_pi,norm_dev_max,energy_residual,mx_avg,my_avg,mz_avg,sweeps,wtime_total,wtime_stray"
        );
        assert_eq!(lines.next().unwrap().split(',').count(), 14);
    }

    #[test]
    fn csv_round_trips_through_parse() {
        let r = sample_record();
        let text = diagnostics_csv(std::slice::from_ref(&r));
        let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[0].parse::<usize>().unwrap(), 3);
        assert_eq!(row[1].parse::<f64>().unwrap(), r.t);
        assert_eq!(row[2].parse::<f64>().unwrap(), r.energy.total());
        assert_eq!(row[8].parse::<f64>().unwrap(), r.avg_m.x);
        assert_eq!(row[10].parse::<f64>().unwrap(), r.avg_m.z);
    }

    #[test]
    fn vtk_structure() {
        let mesh =
            build_box_mesh(1, 1, 1, Vector3::zeros(), Vector3::new(1.0, 1.0, 1.0)).unwrap();
        let m = NodalVectorField::constant(mesh.vertex_count(), Vector3::new(0.0, 0.0, 1.0));
        let text = vtk_unstructured(&mesh, &m, "snapshot t=0");
        assert!(text.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(text.contains("DATASET UNSTRUCTURED_GRID"));
        assert!(text.contains("POINTS 8 double"));
        assert!(text.contains("CELLS 6 30"));
        assert!(text.contains("CELL_TYPES 6"));
        assert!(text.contains("POINT_DATA 8"));
        assert!(text.contains("VECTORS m double"));
        let type_lines = text.lines().filter(|l| *l == "10").count();
        assert_eq!(type_lines, 6);
    }
}
