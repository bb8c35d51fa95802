use std::fs::File;
use std::io::Write;

use simcensus::report::{aggregate_entities, read_entities_csv, write_tables_csv, EntityRow};
use simcensus::Error;

use crate::{CliError, TablesArgs};

pub fn run(args: TablesArgs) -> Result<(), CliError> {
    if args.inputs.is_empty() {
        return Err(CliError::Usage("tables: no entities.csv inputs given".into()));
    }
    let mut rows: Vec<EntityRow> = Vec::new();
    for path in &args.inputs {
        let file = File::open(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let mut part = read_entities_csv(file).map_err(|e| match e {
            e @ Error::CsvRow { .. } => {
                CliError::Usage(format!("{}: {e}", path.display()))
            }
            other => CliError::Runtime(other.to_string()),
        })?;
        rows.append(&mut part);
    }
    let tables = aggregate_entities(&rows);
    match &args.out {
        Some(path) => {
            write_tables_csv(&tables, File::create(path)?)?;
            println!("tables: {} rows -> {}", tables.len(), path.display());
        }
        None => {
            let mut buffer = Vec::new();
            write_tables_csv(&tables, &mut buffer)?;
            std::io::stdout().write_all(&buffer)?;
        }
    }
    Ok(())
}
