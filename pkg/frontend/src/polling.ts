// Poll a status probe until it reports something other than BUSY.
// The sleeper is injectable so tests run on fake time.

export type Sleeper = (ms: number) => Promise<void>;

const realSleep: Sleeper = (ms) => new Promise((r) => setTimeout(r, ms));

export async function pollWhileBusy<T extends { status: string }>(
  probe: () => Promise<T>,
  intervalMs = 1000,
  sleep: Sleeper = realSleep,
  maxPolls = 600
): Promise<T> {
  let last = await probe();
  let polls = 0;
  while (last.status === "BUSY") {
    polls += 1;
    if (polls > maxPolls) {
      throw new Error(`still busy after ${maxPolls} polls`);
    }
    await sleep(intervalMs);
    last = await probe();
  }
  return last;
}
