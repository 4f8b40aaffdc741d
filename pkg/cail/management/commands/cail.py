import logging
import os

import numpy as np
import torch
from django.core.exceptions import ImproperlyConfigured
from django.core.management.base import BaseCommand
from django.core.management.base import CommandError

from cail.data import CorruptDemoFile
from cail.data import default_demo_path
from cail.data import load_demos
from cail.data import save_demos
from cail.envs import get_env_class
from cail.nets import ModelError
from cail.runs import CorruptMetricsFile
from cail.runs import Run
from cail.runs import default_run_dir
from cail.runs import merge_curves
from cail.runs import summarize_runs
from cail.selftest import run_checks
from cail.storage import storage_for_path
from cail.trainer import AgentPolicy
from cail.trainer import RandomPolicy
from cail.trainer import TrainConfig
from cail.trainer import evaluate
from cail.trainer import evaluate_expert
from cail.trainer import generate_expert_demos
from cail.trainer import load_policy
from cail.trainer import train

logger = logging.getLogger(__name__)

SUBCOMMANDS = ('gen-expert', 'train', 'eval', 'plot', 'selftest')

EXIT_SELFTEST_FAILED = 1
EXIT_BAD_CONFIG = 2
EXIT_CORRUPT_DATA = 3


class Command(BaseCommand):
    help = 'Generate expert demos, train and evaluate imitation agents, merge learning curves.'
    requires_system_checks = []

    def add_arguments(self, parser):
        subparsers = parser.add_subparsers(dest='subcommand', required=True)

        def add(name, help_text):
            sub = subparsers.add_parser(name, help=help_text, called_from_command_line=parser.called_from_command_line)
            sub.add_argument('--seed', type=int, default=None, help='Run seed')
            return sub

        gen = add('gen-expert', 'Record scripted-expert demonstrations')
        gen.add_argument('--env', required=True)
        gen.add_argument('--episodes', type=int, default=10)
        gen.add_argument('--out', default=None, help='Demo file (default demos/<env>/<seed>.demo)')

        tr = add('train', 'Train one run')
        tr.add_argument('--algo', default=None)
        tr.add_argument('--env', default=None)
        tr.add_argument('--demos', required=True)
        tr.add_argument('--steps', type=int, default=None, dest='total_steps')
        tr.add_argument('--out', default=None, help='Run directory (default $CAIL_RUNS_DIR/<algo>-<env>-s<seed>)')
        tr.add_argument('--aug', nargs='?', const='shift', default=None, dest='augmentation', metavar='MODE')
        tr.add_argument('--config', default=None, dest='config_file', metavar='FILE')

        ev = add('eval', 'Evaluate the latest checkpoint of a run')
        ev.add_argument('--run', required=True, dest='run_dir')
        ev.add_argument('--episodes', type=int, default=10)
        ev.add_argument('--baseline', choices=('expert', 'random'), default=None,
                        help="Evaluate a reference policy on the run's env instead of the checkpoint")

        pl = add('plot', 'Merge run metrics into long-format learning curves')
        pl.add_argument('--runs', nargs='+', required=True)
        pl.add_argument('--out', required=True)
        pl.add_argument('--summary', default=None, help='Also write per-step mean/std across runs')

        add('selftest', 'Run the fast property checks')

    def handle(self, *args, **options):
        subcommand = options['subcommand']
        handler = getattr(self, 'handle_' + subcommand.replace('-', '_'))
        try:
            handler(**options)
        except ImproperlyConfigured as e:
            raise CommandError(str(e), returncode=EXIT_BAD_CONFIG)
        except (CorruptDemoFile, CorruptMetricsFile, ModelError) as e:
            raise CommandError(str(e), returncode=EXIT_CORRUPT_DATA)
        except FileNotFoundError as e:
            raise CommandError(str(e), returncode=EXIT_BAD_CONFIG)
        except OSError as e:
            raise CommandError('Cannot write output: {}'.format(e), returncode=EXIT_BAD_CONFIG)

    def handle_gen_expert(self, env, episodes, seed, out, **options):
        get_env_class(env)
        seed = 0 if seed is None else seed
        if episodes < 1:
            raise ImproperlyConfigured('--episodes must be >= 1')
        out = out or default_demo_path(env, seed)
        demos, returns = generate_expert_demos(env, episodes, seed)
        save_demos(demos, out)
        for episode, value in enumerate(returns):
            self.stdout.write('episode={} return={:.6f}'.format(episode, value))
        self.stdout.write('mean={:.6f} episodes={} out={}'.format(sum(returns) / len(returns), episodes, out))

    def handle_train(self, demos, config_file, out, **options):
        config_text = None
        if config_file:
            storage, name = storage_for_path(config_file)
            if not storage.exists(name):
                raise ImproperlyConfigured('Config file not found: {}'.format(config_file))
            config_text = storage.read_text(name)
        flags = {key: options[key] for key in ('algo', 'env', 'total_steps', 'seed', 'augmentation')}
        config = TrainConfig.from_sources(config_text, **flags)
        if not os.path.exists(demos):
            raise ImproperlyConfigured('Demo file not found: {}'.format(demos))
        demo_set = load_demos(demos)
        run = Run(out or default_run_dir(config))
        metrics, _ = train(config, demo_set, run)
        final = metrics.final
        self.stdout.write('run={} step={} eval_mean_return={:.6f}'.format(
            run.path, final['step'], final['eval_mean_return']))

    def handle_eval(self, run_dir, episodes, seed, baseline, **options):
        if episodes < 1:
            raise ImproperlyConfigured('--episodes must be >= 1')
        seed = 0 if seed is None else seed
        run = Run(run_dir)
        if not run.storage.exists('config'):
            raise ImproperlyConfigured('No run found in {}'.format(run_dir))
        if baseline == 'expert':
            config = TrainConfig.from_sources(run.read_config_text())
            mean, std = evaluate_expert(config.env, episodes, seed)
        elif baseline == 'random':
            config = TrainConfig.from_sources(run.read_config_text())
            mean, std = evaluate(RandomPolicy(np.random.default_rng(seed)), config.env, episodes, seed)
        else:
            config, agent, step = load_policy(run)
            logger.info('eval run=%s checkpoint_step=%d episodes=%d seed=%d', run.name, step, episodes, seed)
            mean, std = evaluate(AgentPolicy(agent), config.env, episodes, seed)
        self.stdout.write('mean={:.6f} std={:.6f} episodes={}'.format(mean, std, episodes))

    def handle_plot(self, runs, out, summary, **options):
        run_objects = []
        for path in runs:
            run = Run(path)
            if not run.has_metrics():
                raise ImproperlyConfigured('No metrics.csv in {}'.format(path))
            run_objects.append(run)
        storage, name = storage_for_path(out)
        storage.write_text(name, merge_curves(run_objects))
        if summary:
            storage, name = storage_for_path(summary)
            storage.write_text(name, summarize_runs(run_objects))
        self.stdout.write('runs={} out={}'.format(len(run_objects), out))

    def handle_selftest(self, seed, **options):
        torch.manual_seed(0 if seed is None else seed)
        failures = run_checks()
        for name, message in failures:
            self.stderr.write('FAIL {}: {}'.format(name, message))
        if failures:
            raise CommandError(
                'selftest failed: {}'.format(', '.join(name for name, _ in failures)),
                returncode=EXIT_SELFTEST_FAILED,
            )
        self.stdout.write('selftest ok')
