//! Linker. Concatenates translation units into a single program and checks
//! that every symbol reference resolves.

use super::ast::*;
use super::parse::Diagnostic;

pub fn link(units: &[Program]) -> Result<Program, Vec<Diagnostic>> {
    let mut out = Program::default();
    let mut diags = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for unit in units {
        for f in &unit.functions {
            if !seen.insert(f.name.clone()) {
                diags.push(err(format!("duplicate symbol: {}", f.name)));
            }
            out.functions.push(f.clone());
        }
        for g in &unit.globals {
            if !seen.insert(g.name.clone()) {
                diags.push(err(format!("duplicate symbol: {}", g.name)));
            }
            out.globals.push(g.clone());
        }
        for c in &unit.constants {
            if !seen.insert(c.name.clone()) {
                diags.push(err(format!("duplicate symbol: {}", c.name)));
            }
            out.constants.push(c.clone());
        }
    }
    if out.function("__boot").is_none() {
        diags.push(err("missing entry function __boot".to_string()));
    }
    for f in &out.functions {
        for b in &f.blocks {
            for i in &b.instrs {
                for o in i.operands() {
                    let Operand::Sym { name, label } = o else { continue };
                    match label {
                        None => {
                            if out.function(name).is_none()
                                && out.global_index(name).is_none()
                                && out.constant_index(name).is_none()
                            {
                                diags.push(err(format!(
                                    "unresolved symbol @{name} in {}",
                                    f.name
                                )));
                            }
                        }
                        Some(l) => match out.function(name) {
                            None => diags.push(err(format!(
                                "unresolved symbol @{name}.{l} in {}",
                                f.name
                            ))),
                            Some(target) if target.block_index(l).is_none() => {
                                diags.push(err(format!(
                                    "no label {l} in @{name}, referenced from {}",
                                    f.name
                                )))
                            }
                            Some(_) => {}
                        },
                    }
                }
            }
        }
    }
    if diags.is_empty() {
        Ok(out)
    } else {
        Err(diags)
    }
}

fn err(message: String) -> Diagnostic {
    Diagnostic { line: 0, col: 0, message }
}
