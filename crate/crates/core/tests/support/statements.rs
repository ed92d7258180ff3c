//! Well-formed and malformed statements for the stub checker grammar.

#![allow(dead_code)]

pub fn well_formed() -> Vec<String> {
    let bodies = [
        "1 + 1 = 2",
        "forall x : R, x * x >= 0",
        "forall n : nat, (n + 0 = n)%nat",
        "exists k : Z, (2 * k = 4)%Z",
        "forall (a b : R), a + b = b + a",
        "Rabs (120 / 100 * 30 - 130 / 100 * 20) = 10",
        "forall f : nat -> nat, (forall x, f x = x + 1) -> f 1 = 2",
        "sqrt 4 = 2",
        "forall x : R, 0 < x -> ln (exp x) = x",
        "[1; 2; 3] = [1; 2; 3]",
        "{x : nat | x = 1} = {x : nat | x = 1}",
        "\"a.\" = \"a.\"",
        "forall x : R, x = 1.5 -> x > 0",
        "(Z.gcd 21 14 = 7)%Z",
        "forall n : nat, Nat.even (2 * n) = true",
        "Z.modulo 29 4 = 1",
        "True",
        "~ False",
        "forall (x : R) (h : x ^ 2 = 4), x = 2 \\/ x = -2",
        "let y := 3 in y = 3",
    ];
    let mut out = Vec::new();
    for (i, b) in bodies.iter().enumerate() {
        out.push(format!("Theorem wf_{i} : {b}."));
        out.push(format!("Lemma wf_lemma_{i} : {b}."));
    }
    for i in 0..10 {
        out.push(format!(
            "Theorem spaced_{i}   :\n  forall k : nat,\n  (k * {i} = {i} * k)%nat.\n"
        ));
    }
    out
}

pub fn malformed() -> Vec<String> {
    let mut out = Vec::new();
    for i in 0..5 {
        out.push(format!("Theorem mf_a{i} : {i} = {i}"));
        out.push(format!("Theorem mf_b{i} : (({i} = {i}) ."));
        out.push(format!("Theorem mf_c{i} : [{i} = {i})."));
        out.push(format!("Definition mf_d{i} : {i} = {i}."));
        out.push(format!("Theorem : {i} = {i}."));
        out.push(format!("Theorem mf_f{i} {i} = {i}."));
        out.push(format!("Theorem mf_g{i} : {i} = {i}. Proof. reflexivity. Qed."));
        out.push(format!("Theorem mf_h{i} : ."));
        out.push(format!("Theorem mf_i{i} : __COMPLEX__ {i} = {i}."));
        out.push(format!("Theorem mf_j{i} : \"{i}. = {i}"));
    }
    out
}
