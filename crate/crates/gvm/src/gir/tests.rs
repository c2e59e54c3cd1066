use std::collections::HashSet;

use proptest::prelude::*;

use super::*;

const SAMPLE: &str = r#"
; a program exercising every instruction form
global counter 8 = 0000000000000000
const greeting = 68690a

fn __boot(1) regs 4 {
entry:
  %1 = alloca 16
  %2 = add %1, 0
  store.8 %2, 7
  %3 = load.8 %2
  jump next
next:
  %2 = icmp.slt %3, 10
  br %2, done, again
again:
  %2 = sub %3, 1
  %2 = mul %3, %3
  %2 = udiv %3, 2
  %2 = sdiv %3, -2
  %2 = urem %3, 3
  %2 = srem %3, 3
  %2 = and %3, 0xff
  %2 = or %3, 1
  %2 = xor %3, %3
  %2 = shl %3, 2
  %2 = lshr %3, 2
  %2 = ashr %3, 2
  %2 = zext %3, 4
  %2 = sext %3, 2
  %2 = trunc %3, 1
  %2 = gep %1, 8
  %2 = ptrtoint %1
  %2 = inttoptr %2
  %2 = hc.obj_make 8
  hc.obj_shared %2
  %3 = hc.obj_size %2
  hc.obj_resize %2, 16
  hc.obj_free %2
  hc.trace @greeting, 3
  hc.interrupt_mem %1, 1
  hc.interrupt_cfl
  %3 = hc.choose 2
  %3 = hc.control 0, 0
  hc.control 1, 5, %3
  %3 = call @helper, %3, 1
  call @helper, %3, @__boot.next
  ret
done:
  unreachable
}

fn helper(2) regs 3 {
entry:
  %2 = icmp.eq %0, %1
  ret %2
}
"#;

#[test]
fn round_trip_sample() {
    let p = parse_program(SAMPLE).expect("sample parses");
    let printed = print_program(&p);
    let p2 = parse_program(&printed).expect("printed output parses");
    assert_eq!(p, p2);
    assert_eq!(printed, print_program(&p2));
    assert!(validate(&p).is_empty());
}

#[test]
fn hypercall_arity_is_checked() {
    let src = "fn __boot(1) regs 2 {\n  %1 = hc.choose 2, 3\n  ret\n}\n";
    let diags = parse_program(src).unwrap_err();
    assert!(diags.iter().any(|d| d.message.contains("arity mismatch")), "{diags:?}");
}

#[test]
fn parse_errors_carry_line_numbers() {
    let src = "fn f(0) regs 1 {\n  ret\n  bogus %0\n}\n";
    let diags = parse_program(src).unwrap_err();
    assert_eq!(diags.len(), 1);
    assert_eq!(diags[0].line, 3);
    assert!(diags[0].message.contains("bogus"));
}

#[test]
fn duplicate_symbols_rejected() {
    let src = "global x 8\nconst x = ff\nfn f(0) regs 1 {\n  ret\n}\n";
    let diags = parse_program(src).unwrap_err();
    assert!(diags.iter().any(|d| d.message.contains("duplicate symbol: x")));
}

#[test]
fn link_merges_and_resolves() {
    let a = parse_program("fn __boot(1) regs 2 {\n  call @lib_fn\n  ret\n}\n").unwrap();
    let b = parse_program("global shared 8\nfn lib_fn(0) regs 1 {\n  ret\n}\n").unwrap();
    let linked = link(&[a, b]).expect("links");
    assert!(linked.function("lib_fn").is_some());
    assert!(linked.global_index("shared").is_some());
}

#[test]
fn link_reports_unresolved_and_duplicates() {
    let a = parse_program("fn __boot(1) regs 2 {\n  call @missing\n  ret\n}\n").unwrap();
    let b = parse_program("fn __boot(1) regs 2 {\n  ret\n}\n").unwrap();
    let diags = link(&[a.clone(), b]).unwrap_err();
    assert!(diags.iter().any(|d| d.message.contains("duplicate symbol: __boot")));
    assert!(diags.iter().any(|d| d.message.contains("unresolved symbol @missing")));

    let diags = link(&[a]).unwrap_err();
    assert!(diags.iter().any(|d| d.message.contains("unresolved symbol @missing")));
}

#[test]
fn link_requires_boot() {
    let a = parse_program("fn main(0) regs 1 {\n  ret\n}\n").unwrap();
    let diags = link(&[a]).unwrap_err();
    assert!(diags.iter().any(|d| d.message.contains("__boot")));
}

#[test]
fn link_checks_code_labels() {
    let a = parse_program(
        "fn __boot(1) regs 2 {\n  %1 = gep @helper.nope, 0\n  ret\n}\nfn helper(0) regs 1 {\n  ret\n}\n",
    )
    .unwrap();
    let diags = link(&[a]).unwrap_err();
    assert!(diags.iter().any(|d| d.message.contains("no label nope")));
}

#[test]
fn validate_finds_structural_errors() {
    let p = parse_program(
        "fn f(0) regs 2 {\n  %5 = add 1, 2\n  jump nowhere\nb:\n  %1 = add 1, 1\n}\n",
    )
    .unwrap();
    let msgs: Vec<String> = validate(&p).into_iter().map(|d| d.message).collect();
    assert!(msgs.iter().any(|m| m.contains("register %5 out of range")), "{msgs:?}");
    assert!(msgs.iter().any(|m| m.contains("unknown branch target nowhere")), "{msgs:?}");
    assert!(msgs.iter().any(|m| m.contains("does not end in a terminator")), "{msgs:?}");
}

fn count_hc(p: &Program, f: &str, kind: HcKind) -> usize {
    p.function(f)
        .unwrap()
        .blocks
        .iter()
        .flat_map(|b| b.instrs.iter())
        .filter(|i| matches!(i, Instr::Hypercall { kind: k, .. } if *k == kind))
        .count()
}

#[test]
fn instrument_marks_loop_heads() {
    let p = parse_program(
        "fn f(0) regs 2 {\nentry:\n  jump loop\nloop:\n  %1 = add %1, 1\n  %0 = icmp.ult %1, 5\n  br %0, loop, out\nout:\n  ret\n}\n",
    )
    .unwrap();
    let q = instrument(&p, &InstrumentationPolicy::default());
    // only the loop head gets a cfl interrupt, and only one
    assert_eq!(count_hc(&q, "f", HcKind::InterruptCfl), 1);
    let f = q.function("f").unwrap();
    let head = &f.blocks[f.block_index("loop").unwrap()];
    assert!(matches!(
        head.instrs[0],
        Instr::Hypercall { kind: HcKind::InterruptCfl, .. }
    ));
}

#[test]
fn instrument_guards_nonlocal_accesses_only() {
    let p = parse_program(
        "global g 8\nfn f(1) regs 3 {\n  %1 = alloca 8\n  store.8 %1, 1\n  %2 = gep %1, 0\n  %0 = load.8 %2\n  store.8 @g, %0\n  %0 = load.8 %0\n  ret\n}\n",
    )
    .unwrap();
    let q = instrument(&p, &InstrumentationPolicy::default());
    // the alloca-derived store and load need no guard; the global store and
    // the load through a loaded pointer each get one
    assert_eq!(count_hc(&q, "f", HcKind::InterruptMem), 2);
}

#[test]
fn instrument_treats_params_as_shared() {
    let p = parse_program("fn f(1) regs 2 {\n  %1 = load.8 %0\n  ret %1\n}\n").unwrap();
    let q = instrument(&p, &InstrumentationPolicy::default());
    assert_eq!(count_hc(&q, "f", HcKind::InterruptMem), 1);
}

#[test]
fn instrument_poisoned_local_is_not_local() {
    // %1 is assigned both an alloca and a caller pointer, so it must be guarded
    let p = parse_program(
        "fn f(1) regs 2 {\n  %1 = alloca 8\n  %1 = gep %0, 0\n  store.8 %1, 3\n  ret\n}\n",
    )
    .unwrap();
    let q = instrument(&p, &InstrumentationPolicy::default());
    assert_eq!(count_hc(&q, "f", HcKind::InterruptMem), 1);
}

#[test]
fn instrument_is_idempotent() {
    let p = parse_program(
        "global g 8\nfn f(0) regs 2 {\nentry:\n  jump loop\nloop:\n  %1 = load.8 @g\n  store.8 @g, %1\n  br %1, loop, out\nout:\n  ret\n}\n",
    )
    .unwrap();
    let policy = InstrumentationPolicy::default();
    let once = instrument(&p, &policy);
    let twice = instrument(&once, &policy);
    assert_eq!(once, twice);
}

#[test]
fn instrument_skips_exempt_functions() {
    let p = parse_program(
        "global g 8\nfn scheduler(1) regs 2 {\nentry:\n  %1 = load.8 @g\n  br %1, entry, out\nout:\n  ret\n}\n",
    )
    .unwrap();
    let q = instrument(&p, &InstrumentationPolicy::default());
    assert_eq!(p, q);

    let mut policy = InstrumentationPolicy::default();
    policy.exempt = HashSet::new();
    let q = instrument(&p, &policy);
    assert_ne!(p, q);
}

fn arb_operand(regs: u16) -> impl Strategy<Value = Operand> {
    prop_oneof![
        (0..regs).prop_map(Operand::Reg),
        (-1000i64..1000).prop_map(Operand::Imm),
        Just(Operand::sym("g0")),
    ]
}

fn arb_instr(regs: u16) -> impl Strategy<Value = Instr> {
    let dest = 0..regs;
    let op = move || arb_operand(regs);
    prop_oneof![
        (dest.clone(), any::<u8>(), op(), op()).prop_map(|(d, k, a, b)| Instr::Bin {
            dest: d,
            kind: [
                BinKind::Add,
                BinKind::Sub,
                BinKind::Mul,
                BinKind::And,
                BinKind::Or,
                BinKind::Xor,
                BinKind::Shl,
                BinKind::Lshr,
                BinKind::Ashr,
            ][k as usize % 9],
            a,
            b
        }),
        (dest.clone(), any::<u8>(), op(), op()).prop_map(|(d, k, a, b)| Instr::Icmp {
            dest: d,
            kind: [
                CmpKind::Eq,
                CmpKind::Ne,
                CmpKind::Ult,
                CmpKind::Ule,
                CmpKind::Slt,
                CmpKind::Sle
            ][k as usize % 6],
            a,
            b
        }),
        (dest.clone(), op()).prop_map(|(d, a)| Instr::Gep { dest: d, base: a, offset: Operand::Imm(4) }),
        (dest.clone(), 0u8..4).prop_map(|(d, w)| Instr::Load {
            dest: d,
            width: 1 << w,
            addr: Operand::Reg(0)
        }),
        (0u8..4, op()).prop_map(|(w, v)| Instr::Store {
            width: 1 << w,
            addr: Operand::Reg(0),
            value: v
        }),
        (dest.clone(), 1i64..64).prop_map(|(d, s)| Instr::Alloca { dest: d, size: Operand::Imm(s) }),
        (dest, op()).prop_map(|(d, a)| Instr::Hypercall {
            dest: Some(d),
            kind: HcKind::Choose,
            args: vec![a]
        }),
    ]
}

fn arb_program() -> impl Strategy<Value = Program> {
    (1u16..6, prop::collection::vec(prop::collection::vec(arb_instr(4), 0..6), 1..4)).prop_map(
        |(nblocks, bodies)| {
            let nblocks = nblocks.min(bodies.len() as u16) as usize;
            let mut blocks = Vec::new();
            for (i, mut body) in bodies.into_iter().take(nblocks).enumerate() {
                let term = if i + 1 < nblocks {
                    Instr::Jump { target: format!("b{}", i + 1) }
                } else {
                    Instr::Ret { value: Some(Operand::Reg(1)) }
                };
                body.push(term);
                blocks.push(Block { label: format!("b{i}"), instrs: body });
            }
            Program {
                functions: vec![Function { name: "f".into(), params: 1, regs: 4, blocks }],
                globals: vec![GlobalDecl { name: "g0".into(), size: 8, init: None }],
                constants: vec![],
            }
        },
    )
}

proptest! {
    #[test]
    fn print_parse_round_trip(p in arb_program()) {
        let printed = print_program(&p);
        let q = parse_program(&printed).expect("printed program parses");
        prop_assert_eq!(&p, &q);
        prop_assert!(validate(&p).is_empty());
    }

    #[test]
    fn instrument_idempotent_on_random_programs(p in arb_program()) {
        let policy = InstrumentationPolicy::default();
        let once = instrument(&p, &policy);
        let twice = instrument(&once, &policy);
        prop_assert_eq!(once, twice);
    }
}
