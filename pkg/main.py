# main.py
import logging
from pathlib import Path

from climadapt.agents.policies import make_policy, rollout
from climadapt.config import settings
from climadapt.env import AdaptationEnv
from climadapt.logging import setup_logging
from climadapt.monitoring import monitor_command
from climadapt.scenario import fingerprint, load_scenario

# Read the config and set the log level
setup_logging(script_name="main_demo_run")

logger = logging.getLogger(__name__)

TOY_CITY = Path(__file__).resolve().parent / "scenarios" / "toy_city" / "config.yml"


@monitor_command("demo_rollouts")
def main() -> None:
    """Runs the baseline policies once over the toy scenario."""
    logger.info(f"Starting demo in {settings.CLIMADAPT_ENVIRONMENT} mode.")
    scenario = load_scenario(TOY_CITY)
    logger.info(f"Scenario fingerprint: {fingerprint(scenario)}")

    env = AdaptationEnv(scenario)
    for name in ("do-nothing", "random"):
        policy = make_policy(name, scenario.master_seed, seed=0)
        trajectory = rollout(env, policy, seed=0)
        installs = [env.action_label(a) for a in trajectory.actions if a != 0]
        logger.info(
            f"{name}: return {trajectory.total_return:.4f} over "
            f"{len(trajectory.steps)} year(s), {len(installs)} install(s)"
        )
        logger.debug(f"{name} installs: {installs}")

    logger.info("Demo finished.")


if __name__ == "__main__":
    try:
        main()
    except Exception as e:
        logger.critical(f"Unhandled exception in main: {e}", exc_info=True)
