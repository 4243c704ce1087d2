// Probe dialog state: three 7-point questions, keyboard 1-7 answers the
// focused question, and the dialog blocks task input until all three are
// answered (there is no skip).

import { ProbeResponseMessage } from "./protocol.js";

export const ANCHOR_TEXT = "One denotes not at all, four denotes partly, and seven denotes strongly agree.";

export class ProbeDialog {
  readonly questions: string[];
  answers: Array<number | null>;
  focused = 0;

  constructor(questions: string[]) {
    if (questions.length !== 3) throw new Error("probe needs exactly 3 questions");
    this.questions = questions;
    this.answers = [null, null, null];
  }

  /** Select an answer 1..7 for the focused question; advances focus. */
  select(value: number) {
    if (!Number.isInteger(value) || value < 1 || value > 7) return;
    this.answers[this.focused] = value;
    if (this.focused < 2) this.focused += 1;
  }

  selectFor(question: number, value: number) {
    if (question < 0 || question > 2) return;
    this.focused = question;
    this.select(value);
  }

  /** Handle a keyboard key; returns true when it was consumed. */
  key(key: string): boolean {
    if (key >= "1" && key <= "7") {
      this.select(Number(key));
      return true;
    }
    if (key === "ArrowDown" || key === "Tab") {
      this.focused = Math.min(2, this.focused + 1);
      return true;
    }
    if (key === "ArrowUp") {
      this.focused = Math.max(0, this.focused - 1);
      return true;
    }
    return false;
  }

  complete(): boolean {
    return this.answers.every((a) => a !== null);
  }

  response(): ProbeResponseMessage {
    if (!this.complete()) throw new Error("probe not fully answered");
    return {
      type: "probe_response",
      r1: this.answers[0] as number,
      r2: this.answers[1] as number,
      r3: this.answers[2] as number,
    };
  }
}
