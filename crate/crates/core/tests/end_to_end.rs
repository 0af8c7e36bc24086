use std::net::{SocketAddr, TcpListener};
use std::sync::Arc;

use epmpd_core::datagen::{generate, verify, WorkloadSpec};
use epmpd_core::epmpd::{run_client_party, run_tee_party};
use epmpd_core::netio::{Directory, ShapingConfig, TcpTransport};
use epmpd_core::oracle::check_dedup_invariants;
use epmpd_core::runtime::PartyKind;
use epmpd_core::{
    build_cluster_plan, epmpd_run, naive_pairwise_run, oracle_dedup, EpmpdOptions, NetProfile, PartyId, Runtime,
    Variant,
};

#[test]
fn generated_workloads_match_the_oracle() {
    let mut cases = 0;
    for (k, &(m, n, p)) in [(2u32, 64u32, 50.0), (3, 40, 90.0), (5, 100, 30.0), (8, 64, 10.0), (10, 90, 0.0)]
        .iter()
        .enumerate()
    {
        let w = generate(&WorkloadSpec::new(m, n, p, 1000 + k as u64)).unwrap();
        assert!(verify(&w).is_clean());
        let truth = oracle_dedup(&w.sets);
        assert!(check_dedup_invariants(&w.sets, &truth).is_empty());
        let opts = EpmpdOptions {
            seed: k as u64,
            ..Default::default()
        };
        for variant in Variant::ALL {
            let got = epmpd_run(&w.sets, variant, &Runtime::in_process(), &opts).unwrap();
            assert_eq!(got.final_sets, truth.final_sets, "m={m} p={p} {variant}");
            assert!(check_dedup_invariants(&w.sets, &got).is_empty());
            assert_eq!(got.invocations, m as u64 - 1);
            cases += 1;
        }
        let naive = naive_pairwise_run(&w.sets, &Runtime::in_process(), &opts).unwrap();
        assert_eq!(naive.final_sets, truth.final_sets);
        assert_eq!(naive.invocations, (m * (m - 1) / 2) as u64);
    }
    assert_eq!(cases, 15);
}

#[test]
fn loopback_tcp_matches_in_process() {
    let w = generate(&WorkloadSpec::new(4, 200, 30.0, 5)).unwrap();
    let opts = EpmpdOptions {
        seed: 5,
        ..Default::default()
    };
    for variant in Variant::ALL {
        let reference = epmpd_run(&w.sets, variant, &Runtime::in_process(), &opts).unwrap();
        let tcp = Arc::new(TcpTransport::loopback(ShapingConfig::from_profile(NetProfile::ideal())));
        let rt = Runtime::builder().transport(tcp.clone()).build();
        let got = epmpd_run(&w.sets, variant, &rt, &opts).unwrap();
        assert_eq!(got.final_sets, reference.final_sets, "{variant}");
        assert_eq!(got.removals, reference.removals);
        let (timing, _) = rt.finalize(&NetProfile::ideal()).unwrap();
        assert!(timing.wall_clock_estimate > 0.0);
        assert!(tcp.endpoint_errors().is_empty());
    }
}

fn free_addr() -> SocketAddr {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap()
}

/// Every party on its own runtime and transport, as separate processes.
#[test]
fn distributed_parties_match_in_process() {
    let m = 4u32;
    let w = generate(&WorkloadSpec::new(m, 120, 50.0, 8)).unwrap();
    let plan = build_cluster_plan(m).unwrap();
    let directory = Directory {
        tee: free_addr(),
        clients: (0..m).map(|_| free_addr()).collect(),
    };
    let opts = EpmpdOptions {
        seed: 8,
        ..Default::default()
    };
    for variant in [Variant::I, Variant::II] {
        let runtime_for = |me: PartyId| {
            let t = TcpTransport::distributed(me, &directory, ShapingConfig::from_profile(NetProfile::ideal()));
            let rt = Runtime::builder().transport(Arc::new(t)).build();
            rt.register_party(PartyKind::Tee, 0).unwrap();
            for c in 1..=m {
                rt.register_party(PartyKind::Client, c).unwrap();
            }
            rt
        };
        let tee_rt = runtime_for(PartyId::TEE);
        let client_rts: Vec<Runtime> = (1..=m).map(|c| runtime_for(PartyId::client(c))).collect();
        let outcomes = std::thread::scope(|s| {
            let tee = s.spawn(|| run_tee_party(&tee_rt, &plan, variant, &opts));
            let handles: Vec<_> = client_rts
                .iter()
                .enumerate()
                .map(|(i, rt)| {
                    let (plan, set, opts) = (&plan, &w.sets[i], &opts);
                    s.spawn(move || run_client_party(rt, i as u32 + 1, set, variant, plan, opts))
                })
                .collect();
            let outcomes: Vec<_> = handles.into_iter().map(|h| h.join().unwrap().unwrap()).collect();
            tee.join().unwrap().unwrap();
            outcomes
        });
        // a second round reuses the addresses, so the endpoints must be gone first
        drop(tee_rt);
        drop(client_rts);
        let reference = epmpd_run(&w.sets, variant, &Runtime::in_process(), &opts).unwrap();
        for o in outcomes {
            let i = o.client as usize - 1;
            assert_eq!(o.final_set, reference.final_sets[i], "{variant}");
            assert_eq!(o.removals, reference.removals[i]);
        }
    }
}
