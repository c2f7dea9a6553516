/** Boot: ask for the admin secret (kept in memory only), then mount. */

import { AdminClient } from "./api.js";
import { ConsoleApp } from "./app.js";

function mount(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");
  root.innerHTML = `
    <form id="login">
      <label>Admin secret <input type="password" id="secret" autocomplete="off"></label>
      <button type="submit">Connect</button>
    </form>`;
  const form = root.querySelector<HTMLFormElement>("#login")!;
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const secret = root.querySelector<HTMLInputElement>("#secret")!.value;
    const client = new AdminClient(window.location.origin, secret);
    new ConsoleApp(root, client).start();
  });
}

mount();
