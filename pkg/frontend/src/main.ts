import { ApiClient } from './api';
import { BlobEditor } from './editor';
import { EditorSession } from './session';
import type { SceneCreate } from './types';

const DEFAULT_SCENE: SceneCreate = {
  width: 512,
  height: 512,
  confidence: 0.95,
  blobs: [
    {
      id: 'backdrop',
      ellipse: { cx: 0.5, cy: 0.55, a: 0.35, b: 0.25, theta: 0.0 },
      feature: [0.2, 0.4, 0.8],
      label: 'backdrop',
    },
    {
      id: 'subject',
      ellipse: { cx: 0.45, cy: 0.45, a: 0.18, b: 0.1, theta: 0.5 },
      feature: [0.9, 0.6, 0.2],
      label: 'subject',
    },
  ],
};

async function boot(): Promise<void> {
  const canvas = document.getElementById('scene') as HTMLCanvasElement | null;
  const status = document.getElementById('status');
  const front = document.getElementById('bring-front');
  const remove = document.getElementById('remove-blob');
  const exportBtn = document.getElementById('export-scene');
  if (!canvas) throw new Error('missing #scene canvas');

  const api = new ApiClient(`${location.protocol}//${location.hostname}:8796`);
  const sceneId = new URLSearchParams(location.search).get('scene') ?? 'editor-default';
  const session = new EditorSession(api, sceneId);
  const editor = new BlobEditor(canvas, session);
  editor.onStatus = (line) => {
    if (status) status.textContent = line;
  };

  try {
    await session.refresh();
  } catch {
    await session.create(DEFAULT_SCENE);
  }
  await editor.refreshPreview();

  front?.addEventListener('click', async () => {
    if (!session.selectedBlobId) return;
    await session.bringToFront(session.selectedBlobId);
    await editor.refreshPreview();
  });
  remove?.addEventListener('click', async () => {
    if (!session.selectedBlobId) return;
    await session.removeBlob(session.selectedBlobId);
    await editor.refreshPreview();
  });
  exportBtn?.addEventListener('click', () => {
    const blob = new Blob([session.exportScene()], { type: 'application/json' });
    const a = document.createElement('a');
    a.href = URL.createObjectURL(blob);
    a.download = `${sceneId}.json`;
    a.click();
    URL.revokeObjectURL(a.href);
  });
}

void boot();
