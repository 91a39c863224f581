"""Command-line interface.

Exit codes: 0 on success, 2 when ``verify`` does not detect the watermark,
1 on any error (including usage errors).
"""

from __future__ import annotations

import argparse
import json
import secrets
import sys
from . import attacks as atk
from . import io as mio
from .capacity import capacity, entropy
from .channel import ChannelConfig
from .codec import (
    KeySpec,
    RegistryIndex,
    assemble_initial_noise,
    calibrate_threshold,
    keys_for,
    sample_watermark,
)
from .errors import MaxsiveError
from .harness import (
    DecodeOptions,
    ExperimentConfig,
    decode_score,
    identify_decode,
    load_preset,
    run_identification,
    run_verification,
)
from .template import TemplateConfig, detect_angle


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_geometry(p):
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--channels", type=int, default=4)
    p.add_argument("--fhw", type=int, default=2, help="spatial replication factor")
    p.add_argument("--fc", type=int, default=1, help="channel replication factor")


def _add_template(p):
    p.add_argument("--eta", type=float, default=5.0, help="template strength")
    p.add_argument("--theta-d", type=float, default=60.0)
    p.add_argument("--base-angle", type=float, default=45.0)
    p.add_argument("--no-template", action="store_true")


def _add_channel(p):
    p.add_argument("--channel", choices=["identity", "ddim", "ddim-noisy"], default="ddim")
    p.add_argument("--sigma", type=float, default=0.3, help="inversion noise std")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--denoiser", choices=["zero", "linear", "seeded_noise"], default="zero")
    p.add_argument("--denoiser-param", type=float, default=0.0)


def _template_cfg(args) -> TemplateConfig | None:
    if getattr(args, "no_template", False):
        return None
    return TemplateConfig(theta_d=args.theta_d, base_angle=args.base_angle, eta=args.eta)


def _channel_cfg(args, pipeline=None) -> ChannelConfig:
    return ChannelConfig(
        mode=args.channel.replace("-", "_"),
        steps=args.steps,
        denoiser=args.denoiser,
        denoiser_param=args.denoiser_param,
        sigma=args.sigma,
        pipeline=pipeline,
        seed=args.seed,
    )


def _build_parser() -> _Parser:
    parser = _Parser(prog="maxsive", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="create an mxkey v1 key file")
    p.add_argument("--seed-hex", help="64 hex chars; random when omitted")
    _add_geometry(p)
    p.add_argument("-o", "--out", required=True)

    p = sub.add_parser("embed", help="assemble a watermarked initial noise")
    p.add_argument("--key", required=True)
    p.add_argument("-o", "--out", required=True)

    p = sub.add_parser("attack", help="apply an attack pipeline to a latent file")
    p.add_argument("--pipeline", help="inline pipeline text")
    p.add_argument("--preset", help="run every row of a preset (prints labels)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("input")
    p.add_argument("-o", "--out", required=True)

    p = sub.add_parser("extract", help="extract and score a latent against a key")
    p.add_argument("--key", required=True)
    p.add_argument("--correct", choices=["auto", "always", "off"], default="auto")
    p.add_argument("--dump-profile", help="write (theta, mean magnitude) CSV here")
    _add_template(p)
    p.add_argument("input")

    p = sub.add_parser("verify", help="watermark present/absent decision (exit 2 = absent)")
    p.add_argument("--key", required=True)
    p.add_argument("--fpr", type=float, default=1e-3)
    p.add_argument("--correct", choices=["auto", "always", "off"], default="auto")
    _add_template(p)
    p.add_argument("input")

    p = sub.add_parser("identify", help="attribute a latent to a registry user")
    p.add_argument("--registry", required=True)
    _add_geometry(p)
    _add_template(p)
    p.add_argument("--correct", choices=["auto", "always", "off"], default="auto")
    p.add_argument("input")

    p = sub.add_parser("calibrate", help="compute the detection threshold tau")
    p.add_argument("--L", type=int, required=True, dest="length")
    p.add_argument("--fpr", type=float, default=1e-3)
    p.add_argument("--method", choices=["analytic", "montecarlo"], default="analytic")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("capacity", help="payload capacity in bits")
    p.add_argument("--L", type=int, required=True, dest="length")
    p.add_argument("--dist", choices=["ber", "normal"], required=True)

    p = sub.add_parser("attacks", help="attack utilities")
    p.add_argument("action", choices=["list"])

    p = sub.add_parser("bench", help="run a verification or identification campaign")
    p.add_argument("--mode", choices=["verification", "identification"], default="verification")
    p.add_argument("--attacks", default="clean",
                   help="preset name or inline pipeline (verification) / inline pipeline (identification)")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--fpr", type=float, default=1e-3)
    p.add_argument("--negatives", type=int, default=0)
    p.add_argument("--users", type=int, default=64)
    p.add_argument("--images-per-user", type=int, default=1)
    _add_geometry(p)
    _add_template(p)
    _add_channel(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV report path (verification mode)")
    p.add_argument("--json-out", help="JSON sidecar path")

    for name in ("extract", "verify", "identify"):
        sub.choices[name].add_argument("--seed", type=int, default=0, help=argparse.SUPPRESS)

    return parser


def _cmd_keygen(args) -> int:
    seed = args.seed_hex if args.seed_hex else secrets.token_hex(32)
    spec = KeySpec(master_seed=seed, f_hw=args.fhw, f_c=args.fc,
                   h=args.height, w=args.width, c=args.channels)
    mio.save_key(args.out, spec)
    print(f"wrote {args.out}")
    return 0


def _cmd_embed(args) -> int:
    spec = mio.load_key(args.key)
    payload = sample_watermark(spec.master_seed, spec.watermark_shape)
    z = assemble_initial_noise(payload, keys_for(spec), spec.replication,
                               (spec.h, spec.w, spec.c))
    mio.write_latent(args.out, z)
    print(f"wrote {args.out}")
    return 0


def _cmd_attack(args) -> int:
    z = mio.read_latent(args.input)
    if bool(args.pipeline) == bool(args.preset):
        print("error: exactly one of --pipeline/--preset is required", file=sys.stderr)
        return 1
    if args.pipeline:
        pipe = atk.parse_pipeline(args.pipeline)
        mio.write_latent(args.out, atk.apply_pipeline(pipe, z))
        print(f"wrote {args.out}  [{pipe.format()}]")
    else:
        for label, pipe in load_preset(args.preset):
            out = args.out.replace("{}", label) if "{}" in args.out else f"{label}_{args.out}"
            result = z if pipe is None else atk.apply_pipeline(pipe, z)
            mio.write_latent(out, result)
            print(f"wrote {out}  [{label}]")
    return 0


def _decode_one(args):
    spec = mio.load_key(args.key)
    z = mio.read_latent(args.input)
    payload = sample_watermark(spec.master_seed, spec.watermark_shape)
    keys = keys_for(spec)
    tcfg = _template_cfg(args)
    options = DecodeOptions(correct=args.correct)
    result = decode_score(z, payload, keys, spec.replication, tcfg, options)
    if getattr(args, "dump_profile", None):
        est = detect_angle(z, tcfg, dump_profile=True)
        with open(args.dump_profile, "w") as fh:
            fh.write("theta_deg,mean_magnitude\n")
            for k, v in enumerate(est.profile):
                fh.write(f"{k * tcfg.candidate_step},{v}\n")
    return spec, result


def _cmd_extract(args) -> int:
    _, result = _decode_one(args)
    theta = "" if result.theta_hat is None else f" theta_hat={result.theta_hat:.1f}"
    print(f"score {result.score:.4f}{theta} candidates={result.candidates}")
    return 0


def _cmd_verify(args) -> int:
    spec, result = _decode_one(args)
    tau = calibrate_threshold(spec.payload_length, args.fpr)
    detected = result.score > tau
    print(f"score {result.score:.4f} tau {tau:.4f} -> "
          f"{'detected' if detected else 'not_detected'}")
    return 0 if detected else 2


def _cmd_identify(args) -> int:
    entries = mio.load_registry(args.registry)
    index = RegistryIndex(entries, f_hw=args.fhw, f_c=args.fc,
                          h=args.height, w=args.width, c=args.channels)
    z = mio.read_latent(args.input)
    options = DecodeOptions(correct=args.correct)
    uid, best, _ = identify_decode(z, index, _template_cfg(args), options)
    print(json.dumps({"user_id": uid, "score": round(best, 6)}))
    return 0


def _cmd_calibrate(args) -> int:
    tau = calibrate_threshold(args.length, args.fpr, method=args.method,
                              trials=args.trials, seed=args.seed)
    print(json.dumps({"L": args.length, "fpr": args.fpr,
                      "method": args.method, "tau": round(tau, 6)}))
    return 0


def _cmd_capacity(args) -> int:
    dist = "bernoulli_half" if args.dist == "ber" else "standard_normal"
    bits = capacity(args.length, dist)
    print(json.dumps({"L": args.length, "dist": args.dist, "bits": round(bits, 4),
                      "bits_per_element": round(entropy(dist), 4)}))
    return 0


def _cmd_attacks(args) -> int:
    from .attacks import describe_kinds

    for line in describe_kinds():
        print(line)
    return 0


def _cmd_bench(args) -> int:
    tcfg = _template_cfg(args)
    if args.mode == "verification":
        try:
            rows = load_preset(args.attacks)
        except MaxsiveError:
            rows = ([("clean", None)] if args.attacks == "clean"
                    else [(args.attacks, atk.parse_pipeline(args.attacks))])
        cfg = ExperimentConfig(
            trials=args.trials, attack_rows=tuple(rows),
            channel=_channel_cfg(args), template=tcfg,
            f_hw=args.fhw, f_c=args.fc, h=args.height, w=args.width, c=args.channels,
            target_fpr=args.fpr, seed_base=args.seed, negatives=args.negatives,
        )
        report = run_verification(cfg)
        for row in report.rows:
            err = "" if row.mean_theta_err_deg is None else f" theta_err={row.mean_theta_err_deg:.2f}"
            print(f"{row.attack:26s} tpr={row.tpr:.3f} mean={row.mean_score:.4f}"
                  f"{err} ({row.seconds:.1f}s)")
        if report.empirical_fpr is not None:
            print(f"empirical FPR over {report.negatives} negatives: {report.empirical_fpr:.5f}")
        if args.out:
            report.to_csv(args.out)
            print(f"wrote {args.out}")
        if args.json_out:
            report.to_json(args.json_out)
            print(f"wrote {args.json_out}")
        return 0
    attack = None if args.attacks == "clean" else atk.parse_pipeline(args.attacks)
    cfg = ExperimentConfig(
        trials=1, channel=_channel_cfg(args), template=tcfg,
        f_hw=args.fhw, f_c=args.fc, h=args.height, w=args.width, c=args.channels,
        target_fpr=args.fpr, seed_base=args.seed,
    )
    report = run_identification(cfg, args.users, args.images_per_user, attack=attack)
    print(f"accuracy {report.accuracy:.4f} over {report.n_users} users x "
          f"{report.images_per_user} images (mean true score "
          f"{report.mean_true_score:.4f}, {report.seconds:.1f}s)")
    if args.json_out:
        with open(args.json_out, "w") as fh:
            json.dump(vars(report), fh, indent=2, default=str)
        print(f"wrote {args.json_out}")
    return 0


_COMMANDS = {
    "keygen": _cmd_keygen,
    "embed": _cmd_embed,
    "attack": _cmd_attack,
    "extract": _cmd_extract,
    "verify": _cmd_verify,
    "identify": _cmd_identify,
    "calibrate": _cmd_calibrate,
    "capacity": _cmd_capacity,
    "attacks": _cmd_attacks,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    except MaxsiveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
